use std::fmt;

use serde::{Deserialize, Serialize};

use crate::v2x::TrafficBulletin;

/// Lane identifier. Main lanes are numbered from the right (0 is adjacent to
/// the acceleration lane); the ramp and its acceleration lane form one lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Lane {
    Main(u8),
    Ramp,
}

impl Lane {
    pub fn is_main(self) -> bool {
        matches!(self, Lane::Main(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Controller {
    DAcc,
    Fixed,
    Threshold,
    Human,
}

impl Controller {
    pub const ALL: [Controller; 4] = [
        Controller::DAcc,
        Controller::Fixed,
        Controller::Threshold,
        Controller::Human,
    ];

    /// Whether the vehicle runs the distance-gap ACC law.
    pub fn is_acc(self) -> bool {
        !matches!(self, Controller::Human)
    }

    pub fn label(self) -> &'static str {
        match self {
            Controller::DAcc => "d-acc",
            Controller::Fixed => "fixed",
            Controller::Threshold => "threshold",
            Controller::Human => "human",
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Main,
    Ramp,
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: u64,
    pub lane: Lane,
    /// Front bumper position.
    pub position: f64,
    pub speed: f64,
    /// Acceleration applied over the last step.
    pub accel: f64,
    pub length: f64,
    /// Desired bumper-to-bumper gap for the ACC law.
    pub headway_target: f64,
    pub controller: Controller,
    /// Time the vehicle's demand arrived (queue wait counts as delay).
    pub entry_time: f64,
    pub insert_time: f64,
    pub assertiveness: f64,
    pub origin: Origin,
    /// Multiplier on the posted limit giving this driver's desired speed.
    pub speed_factor: f64,
    pub bulletin: Option<TrafficBulletin>,
    pub last_lane_change: f64,
    pub fuel: f64,
}

impl Vehicle {
    pub fn rear(&self) -> f64 {
        self.position - self.length
    }
}

/// A finished trip, written when a vehicle leaves the segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub id: u64,
    pub origin: Origin,
    pub controller: Controller,
    pub entry_time: f64,
    pub insert_time: f64,
    pub exit_time: f64,
    pub fuel: f64,
}

impl TripRecord {
    pub fn travel_time(&self) -> f64 {
        self.exit_time - self.entry_time
    }
}
