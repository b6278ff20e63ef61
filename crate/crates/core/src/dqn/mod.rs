//! Deep Q-learning for headway selection.
//!
//! [`DqnLearner`] is generic over a [`QFunction`] so the same loop drives both
//! the [`QNetwork`] and the lookup-table [`TabularQ`] used as a test oracle.
//! The learner doubles as the [`Agent`] handed to the episode runner: it
//! explores while acting, stores each closed transition, and performs one
//! minibatch update per decision interval.

mod model_io;
mod network;
mod policy;
mod replay;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{run_episode, Agent, EquippedPolicy, Scenario, StateVec, Transition, STATE_DIM};
use crate::rng::{self, Stream, StreamRng};

pub use model_io::{load_model, save_model, ModelFile, SCHEMA_VERSION};
pub use network::{Gradients, Layer, QNetwork};
pub use policy::{argmax, epsilon_schedule, select_action};
pub use replay::ReplayBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Per-decision-step multiplier on epsilon.
    pub epsilon_decay: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Episodes between copies of the online weights into the target network.
    pub target_sync_every: u64,
    pub replay_capacity: usize,
    pub hidden_layers: Vec<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_min: 0.001,
            epsilon_decay: 0.9995,
            batch_size: 32,
            learning_rate: 0.001,
            target_sync_every: 1000,
            replay_capacity: 20_000,
            hidden_layers: vec![8, 12, 20, 16],
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=self.epsilon_start).contains(&self.epsilon_min)
        {
            return bad("need 0 <= epsilon_min <= epsilon_start <= 1");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay < 1.0) {
            return bad("epsilon_decay must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.target_sync_every == 0 {
            return bad("batch_size and target_sync_every must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be >= 1");
        }
        Ok(())
    }

    /// Full widths from the state input to one output per action.
    pub fn layer_sizes(&self, actions: usize) -> Vec<usize> {
        std::iter::once(STATE_DIM)
            .chain(self.hidden_layers.iter().copied())
            .chain([actions])
            .collect()
    }
}

/// An action-value function that can be trained on TD targets.
pub trait QFunction: Clone {
    fn q_values(&self, s: &StateVec) -> Vec<f64>;

    /// One gradient step on the mean squared error of the taken actions.
    fn sgd_step(&mut self, batch: &[&Transition], targets: &[f64], learning_rate: f64) -> f64;

    fn is_finite(&self) -> bool;
}

impl QFunction for QNetwork {
    fn q_values(&self, s: &StateVec) -> Vec<f64> {
        self.forward(s.as_slice())
    }

    fn sgd_step(&mut self, batch: &[&Transition], targets: &[f64], learning_rate: f64) -> f64 {
        let states: Vec<&[f64]> = batch.iter().map(|t| t.s.as_slice()).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.a).collect();
        QNetwork::sgd_step(self, &states, &actions, targets, learning_rate)
    }

    fn is_finite(&self) -> bool {
        QNetwork::is_finite(self)
    }
}

/// Lookup table indexed by the first state feature, read as an integer.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    pub actions: usize,
    pub table: Vec<f64>,
}

impl TabularQ {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            actions,
            table: vec![0.0; states * actions],
        }
    }

    pub fn state_vec(index: usize) -> StateVec {
        let mut s = [0.0; STATE_DIM];
        s[0] = index as f64;
        StateVec(s)
    }

    fn row(&self, s: &StateVec) -> usize {
        s.0[0] as usize * self.actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.table[state * self.actions + action]
    }
}

impl QFunction for TabularQ {
    fn q_values(&self, s: &StateVec) -> Vec<f64> {
        let r = self.row(s);
        self.table[r..r + self.actions].to_vec()
    }

    fn sgd_step(&mut self, batch: &[&Transition], targets: &[f64], learning_rate: f64) -> f64 {
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.table.len()];
        let mut loss = 0.0;
        for (t, y) in batch.iter().zip(targets) {
            let i = self.row(&t.s) + t.a;
            let err = self.table[i] - y;
            loss += err * err / n;
            grad[i] += 2.0 * err / n;
        }
        self.table
            .iter_mut()
            .zip(&grad)
            .for_each(|(q, g)| *q -= learning_rate * g);
        loss
    }

    fn is_finite(&self) -> bool {
        self.table.iter().all(|q| q.is_finite())
    }
}

/// Bellman target: `r` at a terminal step, else `r + gamma * max_a' Q_target(s', a')`.
pub fn td_target<Q: QFunction>(t: &Transition, target: &Q, gamma: f64) -> f64 {
    if t.done {
        t.r
    } else {
        let best = target
            .q_values(&t.s_next)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        t.r + gamma * best
    }
}

pub struct DqnLearner<Q: QFunction> {
    pub online: Q,
    pub target: Q,
    pub buffer: ReplayBuffer,
    pub hp: Hyperparams,
    rng: StreamRng,
    /// Decision step currently being acted in.
    step: u64,
    started: bool,
    episodes: u64,
    pub updates: u64,
    fault: Option<String>,
}

impl<Q: QFunction> DqnLearner<Q> {
    pub fn new(online: Q, hp: Hyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        Ok(Self {
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(hp.replay_capacity),
            hp,
            rng: rng::stream(seed, Stream::Exploration),
            step: 0,
            started: false,
            episodes: 0,
            updates: 0,
            fault: None,
        })
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_schedule(self.step, &self.hp)
    }

    pub fn decision_steps(&self) -> u64 {
        self.step + u64::from(self.started)
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Samples one minibatch and takes a gradient step, if the buffer is full enough.
    fn update(&mut self) {
        let batch = self.buffer.sample(self.hp.batch_size, &mut self.rng);
        if batch.is_empty() {
            return;
        }
        let targets: Vec<f64> = batch
            .iter()
            .map(|t| td_target(t, &self.target, self.hp.gamma))
            .collect();
        let loss = self
            .online
            .sgd_step(&batch, &targets, self.hp.learning_rate);
        self.updates += 1;
        if !self.online.is_finite() || !loss.is_finite() {
            self.fault.get_or_insert_with(|| {
                format!(
                    "non-finite weights after update {} (loss {loss}, step {})",
                    self.updates, self.step
                )
            });
        }
    }

    /// Closes an episode and syncs the target network on schedule.
    pub fn end_episode(&mut self) -> Result<()> {
        if let Some(msg) = self.fault.take() {
            return Err(Error::Invariant(msg));
        }
        self.episodes += 1;
        if self.episodes % self.hp.target_sync_every == 0 {
            self.target = self.online.clone();
        }
        Ok(())
    }
}

impl<Q: QFunction> Agent for DqnLearner<Q> {
    fn act(&mut self, state: &StateVec) -> usize {
        let q = self.online.q_values(state);
        let eps = self.epsilon();
        select_action(&q, eps, &mut self.rng)
    }

    fn begin_interval(&mut self) {
        if self.started {
            self.step += 1;
        }
        self.started = true;
    }

    fn observe(&mut self, transitions: &[Transition]) {
        for t in transitions {
            self.buffer.push(t.clone());
        }
        self.update();
    }
}

/// Acts greedily on a fixed Q-function.
pub struct GreedyAgent<'a, Q: QFunction>(pub &'a Q);

impl<Q: QFunction> Agent for GreedyAgent<'_, Q> {
    fn act(&mut self, state: &StateVec) -> usize {
        argmax(&self.0.q_values(state))
    }
}

/// Something the training loop can run episodes in.
pub trait Environment {
    /// Runs one episode with `agent` and returns its mean per-step reward.
    fn run_episode(&mut self, episode: u64, agent: &mut dyn Agent) -> Result<f64>;
}

/// The traffic scenario as a training environment. Every episode gets its
/// own world seed, and demand may be redrawn per episode.
#[derive(Debug, Clone)]
pub struct ScenarioEnv {
    pub scenario: Scenario,
    pub seed: u64,
    /// Relative half-width of the uniform per-episode demand scaling.
    pub demand_spread: f64,
}

impl Environment for ScenarioEnv {
    fn run_episode(&mut self, episode: u64, agent: &mut dyn Agent) -> Result<f64> {
        let world_seed = rng::derive_seed(self.seed, episode);
        let mut scenario = self.scenario.clone();
        if self.demand_spread > 0.0 {
            let mut r = rng::stream(world_seed, Stream::Scenario);
            let s = self.demand_spread;
            scenario.traffic.main_rate *= 1.0 + r.random_range(-s..=s);
            scenario.traffic.ramp_rate *= 1.0 + r.random_range(-s..=s);
        }
        let ep = run_episode(&scenario, world_seed, EquippedPolicy::Learned(agent))?;
        Ok(ep.report.mean_reward.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// 1-based.
    pub episode: u64,
    pub mean_reward: f64,
    /// Exploration rate in force at the end of the episode.
    pub epsilon: f64,
}

/// Runs `episodes` training episodes and returns the reward curve.
pub fn train<Q: QFunction, E: Environment>(
    env: &mut E,
    learner: &mut DqnLearner<Q>,
    episodes: u64,
    mut progress: impl FnMut(&CurvePoint),
) -> Result<Vec<CurvePoint>> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be >= 1".into()));
    }
    let mut curve = Vec::with_capacity(episodes as usize);
    for e in 0..episodes {
        let mean_reward = env.run_episode(e, learner)?;
        learner.end_episode()?;
        let point = CurvePoint {
            episode: e + 1,
            mean_reward,
            epsilon: learner.epsilon(),
        };
        progress(&point);
        curve.push(point);
    }
    Ok(curve)
}

/// A fresh network shaped for `actions` outputs, initialized from `seed`.
pub fn init_network(hp: &Hyperparams, actions: usize, seed: u64) -> Result<QNetwork> {
    QNetwork::new(
        &hp.layer_sizes(actions),
        &mut rng::stream(seed, Stream::WeightInit),
    )
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

#[cfg(test)]
mod tests;
