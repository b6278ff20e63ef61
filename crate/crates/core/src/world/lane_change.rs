//! MOBIL-style lane changing with an assertiveness knob.
//!
//! Assertiveness in `[0, 1]` loosens both acceptance tests: the deceleration
//! a change may impose on the new follower grows to
//! `safe_decel * (1 + assertiveness * assertive_gain)`, and the required front
//! and rear gaps (`min_gap + time_gap * speed`, using the speed of the
//! vehicle behind each gap) shrink by `1 / (1 + assertiveness)`. Vehicles on the
//! acceleration lane must merge; their gap requirement shrinks further as the
//! lane end approaches.

use serde::{Deserialize, Serialize};

use super::car_following::MAX_DECEL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaneChange {
    Stay,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaneChangeParams {
    pub safe_decel: f64,
    pub assertive_gain: f64,
    /// Standstill part of the required front and rear gap at assertiveness 0.
    pub min_gap: f64,
    /// Speed-proportional part of the required gap at assertiveness 0, s.
    pub time_gap: f64,
    pub politeness: f64,
    /// Acceleration advantage required for a discretionary change.
    pub threshold: f64,
    /// Fraction of the gap minimum waived at the end of the acceleration lane.
    pub urgency_relief: f64,
    /// Seconds between two changes of the same vehicle.
    pub cooldown: f64,
    pub discretionary: bool,
}

impl Default for LaneChangeParams {
    fn default() -> Self {
        Self {
            safe_decel: 2.0,
            assertive_gain: 1.25,
            min_gap: 6.0,
            time_gap: 1.0,
            politeness: 0.5,
            threshold: 0.3,
            urgency_relief: 0.5,
            cooldown: 3.0,
            discretionary: true,
        }
    }
}

/// What a vehicle would face after moving into one adjacent lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetLane {
    /// Gap to the new leader (`f64::INFINITY` if none).
    pub front_gap: f64,
    /// Gap to the new follower (`f64::INFINITY` if none).
    pub rear_gap: f64,
    /// Own acceleration behind the new leader.
    pub own_accel: f64,
    /// Acceleration the change imposes on the new follower (0 if none).
    pub follower_accel: f64,
    /// New follower's acceleration without the change.
    pub follower_accel_before: f64,
    /// Both new pairs keep the braking-distance slack.
    pub braking_safe: bool,
    pub own_speed: f64,
    /// Speed of the new follower (0 if none).
    pub follower_speed: f64,
}

impl TargetLane {
    pub fn open() -> Self {
        Self {
            front_gap: f64::INFINITY,
            rear_gap: f64::INFINITY,
            own_accel: 0.0,
            follower_accel: 0.0,
            follower_accel_before: 0.0,
            braking_safe: true,
            own_speed: 0.0,
            follower_speed: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighborhood {
    /// Own acceleration if staying.
    pub own_accel: f64,
    /// Change in the current follower's acceleration if this vehicle leaves.
    pub old_follower_gain: f64,
    pub left: Option<TargetLane>,
    pub right: Option<TargetLane>,
    /// Set on the acceleration lane: progress through it in `[0, 1]`.
    /// A mandatory change always goes left.
    pub mandatory_urgency: Option<f64>,
    /// Extra incentive required for discretionary changes (hesitation noise).
    pub threshold_jitter: f64,
}

/// Gap a changing vehicle needs in front of a vehicle moving at `speed`.
pub fn required_gap(speed: f64, assertiveness: f64, urgency: f64, p: &LaneChangeParams) -> f64 {
    let scale =
        (1.0 - p.urgency_relief * urgency.clamp(0.0, 1.0)) / (1.0 + assertiveness.clamp(0.0, 1.0));
    (p.min_gap + p.time_gap * speed) * scale
}

/// Safety half of the rule: does `target` admit a change at this
/// assertiveness and urgency?
pub fn gap_acceptable(
    target: &TargetLane,
    assertiveness: f64,
    urgency: f64,
    p: &LaneChangeParams,
) -> bool {
    let a = assertiveness.clamp(0.0, 1.0);
    let decel_bound = -(p.safe_decel * (1.0 + a * p.assertive_gain)).min(MAX_DECEL);
    let required = |speed: f64| required_gap(speed, a, urgency, p);
    target.braking_safe
        && target.follower_accel >= -MAX_DECEL
        && target.follower_accel >= decel_bound
        && target.front_gap > 0.0
        && target.rear_gap > 0.0
        && target.front_gap >= required(target.own_speed)
        && target.rear_gap >= required(target.follower_speed)
}

pub fn lane_change_decision(
    n: &Neighborhood,
    assertiveness: f64,
    p: &LaneChangeParams,
) -> LaneChange {
    if let Some(urgency) = n.mandatory_urgency {
        return match &n.left {
            Some(t) if gap_acceptable(t, assertiveness, urgency, p) => LaneChange::Left,
            _ => LaneChange::Stay,
        };
    }
    if !p.discretionary {
        return LaneChange::Stay;
    }
    let incentive = |t: &TargetLane| {
        t.own_accel - n.own_accel
            + p.politeness * ((t.follower_accel - t.follower_accel_before) + n.old_follower_gain)
    };
    let threshold = p.threshold + n.threshold_jitter;
    let mut best = (LaneChange::Stay, threshold);
    for (dir, target) in [(LaneChange::Left, &n.left), (LaneChange::Right, &n.right)] {
        if let Some(t) = target {
            let gain = incentive(t);
            if gain > best.1 && gap_acceptable(t, assertiveness, 0.0, p) {
                best = (dir, gain);
            }
        }
    }
    best.0
}
