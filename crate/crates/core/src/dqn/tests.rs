use super::*;
use crate::mdp::{Agent, ConstantAgent};

fn transition(r: f64, done: bool) -> Transition {
    Transition {
        s: StateVec([0.0; 5]),
        a: 0,
        r,
        s_next: StateVec([0.0; 5]),
        done,
    }
}

/// Constant-output stand-in for a target network.
#[derive(Clone)]
struct Fixed(Vec<f64>);

impl QFunction for Fixed {
    fn q_values(&self, _s: &StateVec) -> Vec<f64> {
        self.0.clone()
    }
    fn sgd_step(&mut self, _: &[&Transition], _: &[f64], _: f64) -> f64 {
        0.0
    }
    fn is_finite(&self) -> bool {
        true
    }
}

#[test]
fn td_target_examples() {
    let net = Fixed(vec![0.5, 2.0, 1.0]);
    assert_eq!(td_target(&transition(-1.0, true), &net, 0.95), -1.0);
    assert!((td_target(&transition(1.0, false), &net, 0.95) - 2.9).abs() < 1e-12);
    assert_eq!(td_target(&transition(0.7, false), &net, 0.0), 0.7);
}

#[test]
fn hyperparam_validation() {
    assert!(Hyperparams::default().validate().is_ok());
    let bad = [
        Hyperparams {
            gamma: 0.0,
            ..Default::default()
        },
        Hyperparams {
            gamma: 1.1,
            ..Default::default()
        },
        Hyperparams {
            epsilon_min: 1.5,
            ..Default::default()
        },
        Hyperparams {
            epsilon_decay: 1.0,
            ..Default::default()
        },
        Hyperparams {
            batch_size: 0,
            ..Default::default()
        },
    ];
    for hp in bad {
        assert!(hp.validate().is_err(), "{hp:?}");
    }
    assert_eq!(
        Hyperparams::default().layer_sizes(16),
        vec![5, 8, 12, 20, 16, 16]
    );
}

/// Deterministic 4-state chain: action 1 moves right, action 0 left; moving
/// right out of the last state pays 1 and stays put.
struct Chain {
    state: usize,
    rng: StreamRng,
}

const CHAIN_STATES: usize = 4;

fn chain_step(s: usize, a: usize) -> (usize, f64) {
    match a {
        1 if s + 1 == CHAIN_STATES => (s, 1.0),
        1 => (s + 1, 0.0),
        _ => (s.saturating_sub(1), 0.0),
    }
}

impl Environment for Chain {
    fn run_episode(&mut self, _episode: u64, agent: &mut dyn Agent) -> Result<f64> {
        self.state = self.rng.random_range(0..CHAIN_STATES);
        let mut total = 0.0;
        let steps = 10;
        for _ in 0..steps {
            agent.begin_interval();
            let s = TabularQ::state_vec(self.state);
            let a = agent.act(&s);
            let (next, r) = chain_step(self.state, a);
            agent.observe(&[Transition {
                s,
                a,
                r,
                s_next: TabularQ::state_vec(next),
                done: false,
            }]);
            self.state = next;
            total += r;
        }
        Ok(total / steps as f64)
    }
}

fn value_iteration(gamma: f64) -> Vec<[f64; 2]> {
    let mut q = vec![[0.0f64; 2]; CHAIN_STATES];
    for _ in 0..10_000 {
        let mut next = q.clone();
        for (s, row) in next.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (s2, r) = chain_step(s, a);
                *v = r + gamma * q[s2][0].max(q[s2][1]);
            }
        }
        q = next;
    }
    q
}

#[test]
fn tabular_loop_reaches_value_iteration_fixed_point() {
    let hp = Hyperparams {
        gamma: 0.9,
        epsilon_min: 0.5,
        epsilon_decay: 0.999,
        learning_rate: 0.5,
        target_sync_every: 1,
        replay_capacity: 1000,
        ..Default::default()
    };
    let mut learner = DqnLearner::new(TabularQ::new(CHAIN_STATES, 2), hp, 1).unwrap();
    let mut env = Chain {
        state: 0,
        rng: rng::stream(1, Stream::Scenario),
    };
    train(&mut env, &mut learner, 5000, |_| {}).unwrap();
    assert!(learner.decision_steps() <= 50_000);
    let oracle = value_iteration(0.9);
    let err = (0..CHAIN_STATES)
        .flat_map(|s| (0..2).map(move |a| (s, a)))
        .map(|(s, a)| (learner.online.get(s, a) - oracle[s][a]).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-3, "max-norm error {err}");
}

#[test]
fn target_frozen_between_syncs() {
    let hp = Hyperparams {
        target_sync_every: 3,
        learning_rate: 0.5,
        batch_size: 4,
        ..Default::default()
    };
    let mut learner = DqnLearner::new(TabularQ::new(CHAIN_STATES, 2), hp, 2).unwrap();
    let mut env = Chain {
        state: 0,
        rng: rng::stream(2, Stream::Scenario),
    };
    let initial = learner.target.clone();
    for e in 0..2 {
        env.run_episode(e, &mut learner).unwrap();
        learner.end_episode().unwrap();
        assert_eq!(learner.target, initial);
    }
    assert_ne!(learner.online, initial);
    env.run_episode(2, &mut learner).unwrap();
    learner.end_episode().unwrap();
    assert_eq!(learner.target, learner.online);
}

#[test]
fn zero_capacity_never_updates() {
    let hp = Hyperparams {
        replay_capacity: 0,
        ..Default::default()
    };
    let mut learner = DqnLearner::new(TabularQ::new(CHAIN_STATES, 2), hp, 3).unwrap();
    let mut env = Chain {
        state: 0,
        rng: rng::stream(3, Stream::Scenario),
    };
    let curve = train(&mut env, &mut learner, 20, |_| {}).unwrap();
    assert_eq!(curve.len(), 20);
    assert_eq!(learner.updates, 0);
    assert!(learner.online.table.iter().all(|q| *q == 0.0));
}

#[test]
fn epsilon_advances_once_per_interval() {
    let mut learner = DqnLearner::new(TabularQ::new(1, 2), Hyperparams::default(), 4).unwrap();
    assert_eq!(learner.epsilon(), 1.0);
    learner.begin_interval();
    assert_eq!(learner.epsilon(), 1.0);
    learner.begin_interval();
    assert_eq!(learner.epsilon(), 0.9995);
    assert_eq!(learner.decision_steps(), 2);
}

#[test]
fn diverging_weights_abort_training() {
    let hp = Hyperparams {
        learning_rate: 1e300,
        batch_size: 1,
        gamma: 1.0,
        ..Default::default()
    };
    let mut learner = DqnLearner::new(TabularQ::new(CHAIN_STATES, 2), hp, 5).unwrap();
    let mut env = Chain {
        state: 0,
        rng: rng::stream(5, Stream::Scenario),
    };
    let err = train(&mut env, &mut learner, 50, |_| {}).unwrap_err();
    assert!(matches!(err, Error::Invariant(_)), "{err}");
}

#[test]
fn scenario_training_smoke() {
    let scenario = Scenario {
        horizon: 30.0,
        ..Default::default()
    };
    let hp = Hyperparams::default();
    let net = init_network(&hp, scenario.actions.len(), 9).unwrap();
    let mut learner = DqnLearner::new(net, hp, 9).unwrap();
    let mut env = ScenarioEnv {
        scenario,
        seed: 9,
        demand_spread: 0.0,
    };
    let curve = train(&mut env, &mut learner, 2, |_| {}).unwrap();
    assert_eq!(curve.len(), 2);
    assert!(curve.iter().all(|p| (-1.0..=1.0).contains(&p.mean_reward)));
    assert!(curve[1].epsilon < 1.0);
    assert!(learner.updates > 0);
    assert!(learner.online.is_finite());
    let mut greedy = GreedyAgent(&learner.online);
    let mut constant = ConstantAgent(0);
    let s = StateVec([0.5; 5]);
    assert!(greedy.act(&s) < 16);
    assert_eq!(constant.act(&s), 0);
}

#[test]
fn moving_average_window() {
    assert_eq!(
        moving_average(&[1.0, 3.0, 5.0, 7.0], 2),
        vec![1.0, 2.0, 4.0, 6.0]
    );
}
