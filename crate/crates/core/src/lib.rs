//! Highway on-ramp micro-simulation in which ACC-equipped vehicles pick their
//! distance headway from a roadside traffic broadcast, with the choice learned
//! by a small deep Q-network.
//!
//! The crate is organised bottom-up:
//!
//! - [`world`]: road geometry, vehicles, car following, lane changing, arrivals
//!   and the fixed-step integrator.
//! - [`v2x`]: the roadside unit that aggregates traffic state and broadcasts it.
//! - [`mdp`]: state features, the headway action set, the delay reward and the
//!   episode runner.
//! - [`dqn`]: the Q-network, replay buffer, exploration and training loop.
//! - [`baselines`]: fixed-headway and flow-threshold comparison controllers.
//! - [`metrics`]: speed, delay, fuel, space-time grids and decision latency.
//! - [`config`]: the JSON run configuration shared by the CLI and benches.

pub mod baselines;
pub mod config;
pub mod dqn;
pub mod error;
pub mod mdp;
pub mod metrics;
pub mod rng;
pub mod v2x;
pub mod world;

pub use baselines::{fixed_headway_policy, threshold_acc_policy, ThresholdAccConfig};
pub use config::{ControllerConfig, RunConfig};
pub use dqn::{Hyperparams, QNetwork, ReplayBuffer};
pub use error::{Error, Result};
pub use mdp::{ActionSet, RewardConfig, StateVec, Transition};
pub use metrics::RunReport;
pub use v2x::{RsuConfig, TrafficBulletin};
pub use world::{Controller, Lane, RoadGeometry, Vehicle, WorldState};
