//! Roadside unit: aggregates traffic state over the instrumented segment and
//! broadcasts it to equipped vehicles in range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{Controller, Lane, WorldState};

/// Traffic snapshot carried by one broadcast. Field names are the JSON keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficBulletin {
    /// veh/km/lane over the main lanes.
    pub main_density: f64,
    pub main_avg_speed: f64,
    /// veh/km over the ramp plus acceleration lane.
    pub ramp_density: f64,
    pub ramp_avg_speed: f64,
    /// Length available for merging (the acceleration lane).
    pub ramp_length: f64,
    pub segment_length: f64,
    pub congestion_speed: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsuConfig {
    pub position: f64,
    pub range: f64,
    pub broadcast_period: f64,
}

impl Default for RsuConfig {
    fn default() -> Self {
        Self {
            position: 700.0,
            range: 500.0,
            broadcast_period: 1.0,
        }
    }
}

impl RsuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0 && self.broadcast_period > 0.0) {
            return Err(Error::Config(
                "rsu range and broadcast_period must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Computes the bulletin for the current world. Empty lane groups report the
/// posted limit as their average speed.
pub fn aggregate(world: &WorldState, congestion_speed: f64) -> TrafficBulletin {
    let g = &world.geometry;
    let (mut main_n, mut main_v, mut ramp_n, mut ramp_v) = (0usize, 0.0, 0usize, 0.0);
    for v in &world.vehicles {
        match v.lane {
            Lane::Main(_) => {
                main_n += 1;
                main_v += v.speed;
            }
            Lane::Ramp => {
                ramp_n += 1;
                ramp_v += v.speed;
            }
        }
    }
    let mean = |sum: f64, n: usize, empty: f64| if n == 0 { empty } else { sum / n as f64 };
    TrafficBulletin {
        main_density: main_n as f64 / (g.segment_length / 1000.0 * g.main_lane_count as f64),
        main_avg_speed: mean(main_v, main_n, g.speed_limit_main),
        ramp_density: ramp_n as f64 / (g.ramp_total_length() / 1000.0),
        ramp_avg_speed: mean(ramp_v, ramp_n, g.speed_limit_ramp),
        ramp_length: g.accel_lane_length,
        segment_length: g.segment_length,
        congestion_speed,
        timestamp: world.clock,
    }
}

/// Caches `bulletin` on every connected vehicle (D-ACC or threshold ACC)
/// within range and returns their ids. Vehicles out of range keep whatever
/// they last received.
pub fn deliver(bulletin: &TrafficBulletin, world: &mut WorldState, rsu: &RsuConfig) -> Vec<u64> {
    let mut reached = Vec::new();
    for v in world.vehicles.iter_mut() {
        if listens(v.controller) && (v.position - rsu.position).abs() <= rsu.range {
            v.bulletin = Some(*bulletin);
            reached.push(v.id);
        }
    }
    reached
}

fn listens(c: Controller) -> bool {
    matches!(c, Controller::DAcc | Controller::Threshold)
}

/// A roadside unit with its broadcast schedule.
#[derive(Debug, Clone)]
pub struct Rsu {
    pub config: RsuConfig,
    pub congestion_speed: f64,
    last_timestamp: Option<f64>,
    pub latest: Option<TrafficBulletin>,
}

impl Rsu {
    pub fn new(config: RsuConfig, congestion_speed: f64) -> Self {
        Self {
            config,
            congestion_speed,
            last_timestamp: None,
            latest: None,
        }
    }

    pub fn due(&self, clock: f64) -> bool {
        match self.last_timestamp {
            None => true,
            Some(t) => clock - t >= self.config.broadcast_period - 1e-9,
        }
    }

    /// Aggregates and delivers if a broadcast is due; returns the bulletin sent.
    pub fn tick(&mut self, world: &mut WorldState) -> Option<TrafficBulletin> {
        if !self.due(world.clock) {
            return None;
        }
        let bulletin = aggregate(world, self.congestion_speed);
        debug_assert!(self.last_timestamp.is_none_or(|t| bulletin.timestamp > t));
        deliver(&bulletin, world, &self.config);
        self.last_timestamp = Some(bulletin.timestamp);
        self.latest = Some(bulletin);
        Some(bulletin)
    }
}
