use serde::{Deserialize, Serialize};

use super::vehicle::{Lane, Origin};
use crate::error::{Error, Result};

/// Straight highway segment with one on-ramp feeding an acceleration lane
/// that runs alongside the rightmost main lane.
///
/// All positions share one longitudinal axis. The ramp occupies
/// `[merge_point - ramp_length, merge_point)` and the acceleration lane
/// `[merge_point, merge_point + accel_lane_length)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadGeometry {
    pub segment_length: f64,
    pub main_lane_count: u8,
    pub ramp_length: f64,
    pub accel_lane_length: f64,
    pub merge_point: f64,
    pub speed_limit_main: f64,
    pub speed_limit_ramp: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            segment_length: 1500.0,
            main_lane_count: 2,
            ramp_length: 360.0,
            accel_lane_length: 180.0,
            merge_point: 700.0,
            speed_limit_main: 33.33,
            speed_limit_ramp: 22.22,
        }
    }
}

impl RoadGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("geometry: {msg}")));
        if !(self.accel_lane_length > 0.0) {
            return bad("accel_lane_length must be > 0");
        }
        if !(self.segment_length > self.accel_lane_length) {
            return bad("segment_length must exceed accel_lane_length");
        }
        if !(self.ramp_length > 0.0) {
            return bad("ramp_length must be > 0");
        }
        if self.main_lane_count < 1 {
            return bad("main_lane_count must be >= 1");
        }
        if self.merge_point + self.accel_lane_length > self.segment_length {
            return bad("merge_point + accel_lane_length must not exceed segment_length");
        }
        if self.merge_point < self.ramp_length {
            return bad(
                "ramp must start at or after the segment origin (merge_point >= ramp_length)",
            );
        }
        if !(self.speed_limit_main > 0.0 && self.speed_limit_ramp > 0.0) {
            return bad("speed limits must be > 0");
        }
        Ok(())
    }

    pub fn ramp_start(&self) -> f64 {
        self.merge_point - self.ramp_length
    }

    /// End of the acceleration lane; ramp vehicles must merge before it.
    pub fn merge_end(&self) -> f64 {
        self.merge_point + self.accel_lane_length
    }

    pub fn entry_position(&self, lane: Lane) -> f64 {
        match lane {
            Lane::Main(_) => 0.0,
            Lane::Ramp => self.ramp_start(),
        }
    }

    /// Posted limit at `x` on `lane`. The acceleration lane carries the main
    /// limit so merging vehicles can match main-lane speed.
    pub fn speed_limit(&self, lane: Lane, x: f64) -> f64 {
        match lane {
            Lane::Ramp if x < self.merge_point => self.speed_limit_ramp,
            _ => self.speed_limit_main,
        }
    }

    pub fn in_merge_zone(&self, x: f64) -> bool {
        x >= self.merge_point && x < self.merge_end()
    }

    /// Free-flow travel time from entry to the segment end for each origin.
    pub fn free_flow_time(&self, origin: Origin) -> f64 {
        match origin {
            Origin::Main => self.segment_length / self.speed_limit_main,
            Origin::Ramp => {
                self.ramp_length / self.speed_limit_ramp
                    + (self.segment_length - self.merge_point) / self.speed_limit_main
            }
        }
    }

    /// Free-flow time needed to cover the path from entry up to `x`.
    pub fn free_flow_time_to(&self, origin: Origin, x: f64) -> f64 {
        match origin {
            Origin::Main => x.max(0.0) / self.speed_limit_main,
            Origin::Ramp => {
                let start = self.ramp_start();
                let on_ramp = (x.min(self.merge_point) - start).max(0.0);
                let beyond = (x - self.merge_point).max(0.0);
                on_ramp / self.speed_limit_ramp + beyond / self.speed_limit_main
            }
        }
    }

    pub fn main_lanes(&self) -> impl Iterator<Item = Lane> {
        (0..self.main_lane_count).map(Lane::Main)
    }

    /// Length of road the ramp density is measured over (ramp + acceleration lane).
    pub fn ramp_total_length(&self) -> f64 {
        self.ramp_length + self.accel_lane_length
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        RoadGeometry::default().validate().unwrap();
    }

    #[test]
    fn rejects_broken_invariants() {
        let g = RoadGeometry {
            accel_lane_length: 0.0,
            ..Default::default()
        };
        assert!(g.validate().is_err());
        let g = RoadGeometry {
            main_lane_count: 0,
            ..Default::default()
        };
        assert!(g.validate().is_err());
        let g = RoadGeometry {
            merge_point: 1400.0,
            ..Default::default()
        };
        assert!(g.validate().is_err());
        let g = RoadGeometry {
            ramp_length: -1.0,
            ..Default::default()
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn free_flow_times() {
        let g = RoadGeometry::default();
        assert!((g.free_flow_time(Origin::Main) - 1500.0 / 33.33).abs() < 1e-12);
        let ramp = 360.0 / 22.22 + 800.0 / 33.33;
        assert!((g.free_flow_time(Origin::Ramp) - ramp).abs() < 1e-12);
        assert!((g.free_flow_time_to(Origin::Ramp, g.segment_length) - ramp).abs() < 1e-12);
        assert_eq!(g.free_flow_time_to(Origin::Main, 0.0), 0.0);
    }

    #[test]
    fn accel_lane_uses_main_limit() {
        let g = RoadGeometry::default();
        assert_eq!(g.speed_limit(Lane::Ramp, 500.0), 22.22);
        assert_eq!(g.speed_limit(Lane::Ramp, 750.0), 33.33);
        assert!(g.in_merge_zone(700.0));
        assert!(!g.in_merge_zone(880.0));
    }
}
