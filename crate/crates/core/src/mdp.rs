//! The headway-selection MDP: bulletins become 5-feature states, actions are
//! indices into a headway grid, and the reward is +1/-1 depending on whether
//! recent average delay stays within `segment_length / congestion_speed`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::{threshold_acc_policy, ThresholdAccConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, SpeedSample, Window};
use crate::v2x::{Rsu, RsuConfig, TrafficBulletin};
use crate::world::{
    Controller, Dynamics, Equipment, RoadGeometry, TrafficParams, Vehicle, WorldState, MIN_HEADWAY,
};

pub const STATE_DIM: usize = 5;

/// Headway a D-ACC vehicle holds until it first hears a bulletin.
pub const FALLBACK_HEADWAY: f64 = 10.0;

/// Normalized features, in order: main density, ramp density, main speed,
/// ramp speed, merging length. Each lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVec(pub [f64; STATE_DIM]);

impl StateVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Scales used to normalize bulletin quantities. Saved with a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Normalization {
    /// veh/km/lane.
    pub jam_density: f64,
    pub speed_scale: f64,
    pub length_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            jam_density: 150.0,
            speed_scale: 33.33,
            length_scale: 360.0,
        }
    }
}

pub fn featurize(b: &TrafficBulletin, norm: &Normalization) -> StateVec {
    let unit = |x: f64| x.clamp(0.0, 1.0);
    StateVec([
        unit(b.main_density / norm.jam_density),
        unit(b.ramp_density / norm.jam_density),
        unit(b.main_avg_speed / norm.speed_scale),
        unit(b.ramp_avg_speed / norm.speed_scale),
        unit(b.ramp_length / norm.length_scale),
    ])
}

/// Ascending headway targets; index `i` is action `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionSet(Vec<f64>);

impl ActionSet {
    pub fn new(targets: Vec<f64>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Config("action set must not be empty".into()));
        }
        if targets[0] != MIN_HEADWAY {
            return Err(Error::Config(format!(
                "action set must start at {MIN_HEADWAY} m"
            )));
        }
        if !targets.windows(2).all(|w| w[1] > w[0]) || !targets.iter().all(|t| t.is_finite()) {
            return Err(Error::Config(
                "action set must be strictly increasing".into(),
            ));
        }
        Ok(Self(targets))
    }

    /// `count` targets evenly spaced from the minimum headway to `max`.
    pub fn linear(count: usize, max: f64) -> Result<Self> {
        if count < 2 {
            return Self::new(vec![MIN_HEADWAY]);
        }
        let step = (max - MIN_HEADWAY) / (count - 1) as f64;
        Self::new((0..count).map(|i| MIN_HEADWAY + step * i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.0.get(index).copied()
    }

    pub fn targets(&self) -> &[f64] {
        &self.0
    }
}

impl Default for ActionSet {
    fn default() -> Self {
        Self::linear(16, 40.0).expect("default grid is valid")
    }
}

impl TryFrom<Vec<f64>> for ActionSet {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ActionSet> for Vec<f64> {
    fn from(a: ActionSet) -> Self {
        a.0
    }
}

/// Sets the vehicle's headway target to the chosen grid value.
///
/// Panics on an out-of-range index: callers only pass indices produced from
/// the same action set.
pub fn apply_action(vehicle: &mut Vehicle, action_index: usize, actions: &ActionSet) {
    let target = actions.get(action_index).unwrap_or_else(|| {
        panic!(
            "action index {action_index} outside action set of {}",
            actions.len()
        )
    });
    vehicle.headway_target = target;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub congestion_speed: f64,
    pub segment_length: f64,
    /// Trailing window of completed trips the delay is averaged over, s.
    pub delay_window: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            congestion_speed: 60.0 / 3.6,
            segment_length: 1500.0,
            delay_window: 60.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.congestion_speed > 0.0 && self.segment_length > 0.0 && self.delay_window > 0.0) {
            return Err(Error::Config("reward parameters must all be > 0".into()));
        }
        Ok(())
    }

    pub fn delay_threshold(&self) -> f64 {
        self.segment_length / self.congestion_speed
    }
}

/// +1 when the average delay is within the threshold (inclusive), else -1.
pub fn reward(avg_delay: f64, cfg: &RewardConfig) -> f64 {
    if avg_delay <= cfg.delay_threshold() {
        1.0
    } else {
        -1.0
    }
}

/// Average delay the reward is computed from: completed trips in the
/// trailing window, or the delay accrued so far by vehicles on the road when
/// nothing completed recently.
pub fn recent_delay(world: &WorldState, window: f64) -> f64 {
    let clock = world.clock;
    let recent = Window::new(clock - window, clock + world.dt / 2.0);
    if let Some(d) = metrics::avg_delay(&world.completed_trips, recent, &world.geometry) {
        return d;
    }
    let g = &world.geometry;
    let accrued = world
        .vehicles
        .iter()
        .map(|v| (clock - v.entry_time - g.free_flow_time_to(v.origin, v.position)).max(0.0));
    let (sum, n) = accrued.fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: StateVec,
    pub a: usize,
    pub r: f64,
    pub s_next: StateVec,
    pub done: bool,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: std::io::Write>(transitions: &[Transition], mut out: W) -> Result<()> {
    for t in transitions {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// A decision maker for D-ACC vehicles. All equipped vehicles share one agent.
pub trait Agent {
    /// Chooses an action index for one vehicle.
    fn act(&mut self, state: &StateVec) -> usize;

    /// Called once per action interval before any vehicle acts.
    fn begin_interval(&mut self) {}

    /// Receives the transitions closed at the end of an interval.
    fn observe(&mut self, _transitions: &[Transition]) {}
}

/// Always picks the same action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantAgent(pub usize);

impl Agent for ConstantAgent {
    fn act(&mut self, _state: &StateVec) -> usize {
        self.0
    }
}

/// What equipped vehicles run in an episode.
pub enum EquippedPolicy<'a> {
    Fixed(f64),
    Threshold(ThresholdAccConfig),
    Learned(&'a mut dyn Agent),
}

impl EquippedPolicy<'_> {
    pub fn controller(&self) -> Controller {
        match self {
            EquippedPolicy::Fixed(_) => Controller::Fixed,
            EquippedPolicy::Threshold(_) => Controller::Threshold,
            EquippedPolicy::Learned(_) => Controller::DAcc,
        }
    }
}

/// Everything needed to build and run one world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: RoadGeometry,
    pub traffic: TrafficParams,
    pub dynamics: Dynamics,
    pub rsu: RsuConfig,
    pub reward: RewardConfig,
    pub normalization: Normalization,
    pub actions: ActionSet,
    pub horizon: f64,
    /// Leading period excluded from reported metrics.
    pub warmup: f64,
    pub dt: f64,
    pub action_interval: f64,
    pub record_grid: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            geometry: RoadGeometry::default(),
            traffic: TrafficParams::default(),
            dynamics: Dynamics::default(),
            rsu: RsuConfig::default(),
            reward: RewardConfig::default(),
            normalization: Normalization::default(),
            actions: ActionSet::default(),
            horizon: 300.0,
            warmup: 0.0,
            dt: 0.1,
            action_interval: 1.0,
            record_grid: false,
        }
    }
}

impl Scenario {
    pub fn substeps(&self) -> usize {
        ((self.action_interval / self.dt).round() as usize).max(1)
    }

    pub fn intervals(&self) -> usize {
        (self.horizon / self.action_interval).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub trajectory: Vec<Transition>,
    pub report: RunReport,
    pub samples: Vec<SpeedSample>,
    /// Shared reward issued at the end of each action interval.
    pub rewards: Vec<f64>,
    /// Every broadcast the roadside unit sent, in order.
    pub bulletins: Vec<TrafficBulletin>,
    pub world: WorldState,
}

use crate::metrics::RunReport;

/// Runs one episode from an empty road seeded with `seed`.
///
/// Each action interval: connected vehicles in range receive a bulletin,
/// D-ACC vehicles that have one pick a headway, and transitions opened in the
/// previous interval are closed with the shared reward. The episode ends at
/// the horizon with every open transition marked done.
pub fn run_episode(
    scenario: &Scenario,
    seed: u64,
    mut policy: EquippedPolicy<'_>,
) -> Result<Episode> {
    if !(scenario.horizon > 0.0) {
        return Err(Error::Config("horizon must be > 0".into()));
    }
    scenario.reward.validate()?;
    scenario.rsu.validate()?;
    let initial_headway = match &policy {
        EquippedPolicy::Fixed(h) => *h,
        EquippedPolicy::Threshold(cfg) => {
            cfg.validate()?;
            cfg.h_high
        }
        EquippedPolicy::Learned(_) => FALLBACK_HEADWAY,
    };
    let equipment = Equipment {
        controller: policy.controller(),
        initial_headway,
    };
    let mut world = WorldState::new(
        scenario.geometry.clone(),
        scenario.traffic.clone(),
        scenario.dynamics.clone(),
        equipment,
        seed,
        scenario.dt,
    )?;
    let mut rsu = Rsu::new(scenario.rsu, scenario.reward.congestion_speed);
    let norm = scenario.normalization;
    let lanes = scenario.geometry.main_lane_count;

    let mut pending: BTreeMap<u64, (StateVec, usize)> = BTreeMap::new();
    let mut trajectory = Vec::new();
    let mut rewards = Vec::new();
    let mut samples = Vec::new();
    let mut bulletins = Vec::new();
    let intervals = scenario.intervals();

    for k in 0..=intervals {
        bulletins.extend(rsu.tick(&mut world));
        let done = k == intervals;
        if k > 0 {
            let r = reward(
                recent_delay(&world, scenario.reward.delay_window),
                &scenario.reward,
            );
            rewards.push(r);
            let fallback = rsu.latest.map(|b| featurize(&b, &norm));
            let mut closed = Vec::with_capacity(pending.len());
            for (id, (s, a)) in std::mem::take(&mut pending) {
                let next = world
                    .vehicle(id)
                    .and_then(|v| v.bulletin)
                    .map(|b| featurize(&b, &norm))
                    .or(fallback);
                if let Some(s_next) = next {
                    closed.push(Transition {
                        s,
                        a,
                        r,
                        s_next,
                        done,
                    });
                }
            }
            if let EquippedPolicy::Learned(agent) = &mut policy {
                if !closed.is_empty() {
                    agent.observe(&closed);
                }
            }
            trajectory.extend(closed);
        }
        if done {
            break;
        }

        match &mut policy {
            EquippedPolicy::Fixed(_) => {}
            EquippedPolicy::Threshold(cfg) => {
                for v in world
                    .vehicles
                    .iter_mut()
                    .filter(|v| v.controller == Controller::Threshold)
                {
                    v.headway_target = threshold_acc_policy(v.bulletin.as_ref(), cfg, lanes);
                }
            }
            EquippedPolicy::Learned(agent) => {
                agent.begin_interval();
                for v in world
                    .vehicles
                    .iter_mut()
                    .filter(|v| v.controller == Controller::DAcc)
                {
                    match v.bulletin {
                        Some(b) => {
                            let s = featurize(&b, &norm);
                            let a = agent.act(&s);
                            apply_action(v, a, &scenario.actions);
                            pending.insert(v.id, (s, a));
                        }
                        None => v.headway_target = FALLBACK_HEADWAY,
                    }
                }
            }
        }

        for _ in 0..scenario.substeps() {
            world.step()?;
            bulletins.extend(rsu.tick(&mut world));
        }
        samples.extend(world.speed_samples().map(|(lane, x, v)| SpeedSample {
            t: world.clock,
            x,
            v,
            lane,
        }));
    }

    let report = build_report(&world, &samples, &rewards, scenario, seed);
    Ok(Episode {
        trajectory,
        report,
        samples,
        rewards,
        bulletins,
        world,
    })
}

fn build_report(
    world: &WorldState,
    samples: &[SpeedSample],
    rewards: &[f64],
    sc: &Scenario,
    seed: u64,
) -> RunReport {
    let window = Window::new(sc.warmup, f64::INFINITY);
    let trips = &world.completed_trips;
    let g = &world.geometry;
    RunReport {
        seed,
        avg_speed: metrics::avg_speed(samples, window),
        avg_main_speed: metrics::avg_main_speed(samples, window),
        avg_delay: metrics::avg_delay(trips, window, g),
        avg_fuel: metrics::avg_fuel(trips, window),
        completed: trips.len(),
        queued: world.queued(),
        on_road: world.on_road(),
        spawned: world.spawned,
        mean_reward: (!rewards.is_empty())
            .then(|| rewards.iter().sum::<f64>() / rewards.len() as f64),
        per_controller: metrics::controller_breakdown(trips, window, g),
        decision_latency: None,
        space_time_grid: sc
            .record_grid
            .then(|| metrics::space_time_grid(samples, g, sc.horizon)),
    }
}
