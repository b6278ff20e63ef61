//! Fixtures shared by the benchmarks.

use rampflow::dqn::{init_network, Hyperparams};
use rampflow::mdp::{ActionSet, StateVec, Transition};
use rampflow::rng::{stream, Stream};
use rampflow::world::{Controller, Dynamics, Equipment, TrafficParams};
use rampflow::{QNetwork, RoadGeometry, WorldState};
use rand::Rng;

/// A default-demand world stepped for `seconds`, so the road is populated.
pub fn warmed_world(seconds: f64, penetration: f64, seed: u64) -> WorldState {
    let traffic = TrafficParams {
        penetration,
        ..Default::default()
    };
    let eq = Equipment {
        controller: Controller::Fixed,
        initial_headway: 10.0,
    };
    let mut world = WorldState::new(
        RoadGeometry::default(),
        traffic,
        Dynamics::default(),
        eq,
        seed,
        0.1,
    )
    .expect("default world is valid");
    for _ in 0..(seconds / 0.1).round() as usize {
        world.step().expect("warm-up step");
    }
    world
}

/// The default-shaped Q-network.
pub fn default_network(seed: u64) -> QNetwork {
    init_network(&Hyperparams::default(), ActionSet::default().len(), seed)
        .expect("valid layer sizes")
}

/// `n` random transitions with states in the unit cube.
pub fn random_transitions(n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = stream(seed, Stream::Scenario);
    let mut state = || StateVec(std::array::from_fn(|_| rng.random()));
    (0..n)
        .map(|i| Transition {
            s: state(),
            a: i % ActionSet::default().len(),
            r: if i % 3 == 0 { -1.0 } else { 1.0 },
            s_next: state(),
            done: false,
        })
        .collect()
}
