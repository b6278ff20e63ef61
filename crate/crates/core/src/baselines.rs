//! Comparison controllers: a constant headway, and a flow-threshold ACC that
//! tightens gaps under heavy flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::v2x::TrafficBulletin;
use crate::world::MIN_HEADWAY;

/// Every equipped vehicle holds this headway for the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedHeadway(f64);

impl FixedHeadway {
    pub fn headway(self) -> f64 {
        self.0
    }
}

pub fn fixed_headway_policy(h: f64) -> Result<FixedHeadway> {
    if h >= MIN_HEADWAY && h.is_finite() {
        Ok(FixedHeadway(h))
    } else {
        Err(Error::Config(format!(
            "fixed headway {h} m is below the {MIN_HEADWAY} m minimum"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdAccConfig {
    /// Measured main-carriageway flow (veh/h) at which gaps tighten.
    pub flow_threshold: f64,
    pub h_low: f64,
    pub h_high: f64,
}

impl Default for ThresholdAccConfig {
    fn default() -> Self {
        Self {
            flow_threshold: 1800.0,
            h_low: 5.0,
            h_high: 15.0,
        }
    }
}

impl ThresholdAccConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_low >= MIN_HEADWAY) {
            return Err(Error::Config(format!(
                "threshold h_low must be >= {MIN_HEADWAY} m"
            )));
        }
        if !(self.h_low < self.h_high) {
            return Err(Error::Config("threshold h_low must be below h_high".into()));
        }
        Ok(())
    }
}

/// Main flow from q = k * v, in veh/h over all main lanes.
pub fn measured_flow(bulletin: &TrafficBulletin, lane_count: u8) -> f64 {
    bulletin.main_density * bulletin.main_avg_speed * 3.6 * lane_count as f64
}

/// `h_low` when measured flow reaches the threshold, else `h_high`. Without a
/// bulletin the controller stays conservative.
pub fn threshold_acc_policy(
    bulletin: Option<&TrafficBulletin>,
    cfg: &ThresholdAccConfig,
    lane_count: u8,
) -> f64 {
    match bulletin {
        Some(b) if measured_flow(b, lane_count) >= cfg.flow_threshold => cfg.h_low,
        _ => cfg.h_high,
    }
}
