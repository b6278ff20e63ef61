//! Longitudinal control: the IDM used by human drivers, the distance-gap ACC
//! law, and a braking-distance guard that keeps every pair collision free.

use serde::{Deserialize, Serialize};

pub const MAX_ACCEL: f64 = 2.6;
pub const MAX_DECEL: f64 = 4.5;
pub const MIN_HEADWAY: f64 = 2.5;
pub const VEHICLE_LENGTH: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    pub min_gap: f64,
    pub time_headway: f64,
    pub delta: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            min_gap: MIN_HEADWAY,
            time_headway: 1.0,
            delta: 4.0,
            max_accel: MAX_ACCEL,
            comfort_decel: 2.0,
        }
    }
}

impl IdmParams {
    /// Collision guard paired with the ACC law. The distance-gap law owns the
    /// spacing policy, so the guard keeps only the standstill gap and the
    /// closing-speed term.
    pub fn acc_guard() -> Self {
        Self {
            time_headway: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccGains {
    /// Gap-error gain, s^-2.
    pub k_gap: f64,
    /// Speed-difference gain, s^-1.
    pub k_speed: f64,
}

impl Default for AccGains {
    fn default() -> Self {
        Self {
            k_gap: 0.23,
            k_speed: 0.74,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    /// Bumper-to-bumper gap.
    pub gap: f64,
    pub speed: f64,
}

pub fn clamp_accel(a: f64) -> f64 {
    a.clamp(-MAX_DECEL, MAX_ACCEL)
}

/// Intelligent Driver Model acceleration, clamped to the vehicle limits.
/// A non-positive gap to a leader returns full emergency braking; a
/// non-positive desired speed brakes to a standstill.
pub fn car_following_accel(v: f64, leader: Option<Leader>, free_speed: f64, p: &IdmParams) -> f64 {
    if free_speed <= 0.0 {
        return if v > 0.0 { -MAX_DECEL } else { 0.0 };
    }
    let free_term = 1.0 - (v / free_speed).powf(p.delta);
    let interaction = match leader {
        None => 0.0,
        Some(l) if l.gap <= 0.0 => return -MAX_DECEL,
        Some(l) => {
            let dv = v - l.speed;
            let dynamic =
                v * p.time_headway + v * dv / (2.0 * (p.max_accel * p.comfort_decel).sqrt());
            let desired = p.min_gap + dynamic.max(0.0);
            (desired / l.gap).powi(2)
        }
    };
    clamp_accel(p.max_accel * (free_term - interaction))
}

/// Distance-gap ACC law `k_gap*(gap - target) + k_speed*(v_lead - v)`, never
/// exceeding what the collision guard allows.
pub fn acc_gap_control(
    gap: f64,
    headway_target: f64,
    v: f64,
    v_lead: f64,
    free_speed: f64,
    guard: &IdmParams,
    gains: &AccGains,
) -> f64 {
    let spacing = gains.k_gap * (gap - headway_target) + gains.k_speed * (v_lead - v);
    let safe = car_following_accel(v, Some(Leader { gap, speed: v_lead }), free_speed, guard);
    clamp_accel(safe.min(spacing))
}

/// Distance travelled while braking at `decel` from the next step on, under
/// semi-implicit Euler with step `dt`: `dt * sum_k max(v - k*decel*dt, 0)`.
pub fn braking_distance(v: f64, decel: f64, dt: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let step = decel * dt;
    let n = (v / step).floor();
    dt * (n * v - step * n * (n + 1.0) / 2.0)
}

/// Slack of a follower/leader pair: how much gap would remain if both braked
/// at the hard limit, the follower reacting one step late. A pair with slack
/// at or above the safety margin can always be kept collision free.
pub fn braking_slack(gap: f64, v_follow: f64, v_lead: f64, dt: f64) -> f64 {
    gap + braking_distance(v_lead, MAX_DECEL, dt) - braking_distance(v_follow, MAX_DECEL, dt)
}

/// Largest next-step follower speed that keeps the pair's slack at or above
/// `margin` even if the leader brakes at the hard limit during this step.
pub fn safe_speed(gap: f64, v_lead: f64, dt: f64, margin: f64) -> f64 {
    let step = MAX_DECEL * dt;
    let lead_next = (v_lead - step).max(0.0);
    // Solve v*dt + braking_distance(v) = budget; the left side is piecewise
    // linear in v with breakpoints at multiples of `step`.
    let budget = gap + lead_next * dt + braking_distance(lead_next, MAX_DECEL, dt) - margin;
    if budget <= 0.0 {
        return 0.0;
    }
    let n = ((-1.0 + (1.0 + 8.0 * budget / (dt * step)).sqrt()) / 2.0)
        .floor()
        .max(0.0);
    let v = (budget / dt + step * n * (n + 1.0) / 2.0) / (n + 1.0);
    v.clamp(n * step, (n + 1.0) * step)
}
