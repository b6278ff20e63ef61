//! The road world: geometry, vehicles, and the fixed-step transition kernel.

mod arrivals;
pub mod car_following;
mod geometry;
pub mod lane_change;
mod vehicle;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::fuel_rate;
use crate::rng::{self, Stream, StreamRng};

pub use arrivals::{arrival_probability, spawn_arrivals, PendingArrival};
pub use car_following::{
    acc_gap_control, braking_slack, car_following_accel, safe_speed, AccGains, IdmParams, Leader,
    MAX_ACCEL, MAX_DECEL, MIN_HEADWAY, VEHICLE_LENGTH,
};
pub use geometry::RoadGeometry;
pub use lane_change::{
    lane_change_decision, required_gap, LaneChange, LaneChangeParams, Neighborhood, TargetLane,
};
pub use vehicle::{Controller, Lane, Origin, TripRecord, Vehicle};

/// Demand and driver-population settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficParams {
    /// Demand on each main lane, veh/h.
    pub main_rate: f64,
    /// Ramp demand, veh/h.
    pub ramp_rate: f64,
    /// Share of vehicles carrying the equipped controller.
    pub penetration: f64,
    pub assertiveness: f64,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            main_rate: 2057.0,
            ramp_rate: 900.0,
            penetration: 0.3,
            assertiveness: 1.0,
        }
    }
}

impl TrafficParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.main_rate >= 0.0 && self.ramp_rate >= 0.0) {
            return Err(Error::Config("arrival rates must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.penetration) {
            return Err(Error::Config("penetration must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.assertiveness) {
            return Err(Error::Config("assertiveness must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Vehicle-model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dynamics {
    pub human: IdmParams,
    pub acc_guard: IdmParams,
    pub acc_gains: AccGains,
    pub lane_change: LaneChangeParams,
    /// Standard deviation of the desired-speed factor (clipped at 2 sd).
    pub speed_factor_sd: f64,
    /// Time gap required behind the last vehicle before inserting a new one.
    pub insertion_time_gap: f64,
    /// Gap every pair keeps after a worst-case joint emergency stop.
    pub safety_margin: f64,
    /// Random acceleration shortfall of human drivers, as a fraction of
    /// `MAX_ACCEL` (0 disables it).
    pub human_dawdle: f64,
    /// Largest deceleration a main-lane vehicle accepts to open a gap for a
    /// merging vehicle alongside (0 disables yielding).
    pub cooperation_decel: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            human: IdmParams::default(),
            acc_guard: IdmParams::acc_guard(),
            acc_gains: AccGains::default(),
            lane_change: LaneChangeParams::default(),
            speed_factor_sd: 0.1,
            insertion_time_gap: 0.5,
            safety_margin: 0.5,
            human_dawdle: 0.0,
            cooperation_decel: 2.0,
        }
    }
}

/// Which controller equipped vehicles run, and the target they start with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equipment {
    pub controller: Controller,
    pub initial_headway: f64,
}

#[derive(Debug, Clone)]
pub struct RngStreams {
    pub arrivals: StreamRng,
    pub lane_change: StreamRng,
    pub driver: StreamRng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            arrivals: rng::stream(seed, Stream::Arrivals),
            lane_change: rng::stream(seed, Stream::LaneChange),
            driver: rng::stream(seed, Stream::Driver),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub clock: f64,
    pub dt: f64,
    /// Sorted by `(lane, position)`.
    pub vehicles: Vec<Vehicle>,
    pub geometry: RoadGeometry,
    pub traffic: TrafficParams,
    pub dynamics: Dynamics,
    pub equipment: Equipment,
    pub streams: RngStreams,
    pub completed_trips: Vec<TripRecord>,
    /// One queue per main lane, then the ramp.
    pub queues: Vec<VecDeque<PendingArrival>>,
    pub spawned: u64,
    pub next_id: u64,
    pub steps: u64,
}

impl WorldState {
    pub fn new(
        geometry: RoadGeometry,
        traffic: TrafficParams,
        dynamics: Dynamics,
        equipment: Equipment,
        seed: u64,
        dt: f64,
    ) -> Result<Self> {
        geometry.validate()?;
        traffic.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config("dt must be > 0".into()));
        }
        if !(equipment.initial_headway >= MIN_HEADWAY) {
            return Err(Error::Config(format!(
                "initial headway must be >= {MIN_HEADWAY} m"
            )));
        }
        let queues = vec![VecDeque::new(); geometry.main_lane_count as usize + 1];
        Ok(Self {
            clock: 0.0,
            dt,
            vehicles: Vec::new(),
            geometry,
            traffic,
            dynamics,
            equipment,
            streams: RngStreams::new(seed),
            completed_trips: Vec::new(),
            queues,
            spawned: 0,
            next_id: 0,
            steps: 0,
        })
    }

    pub fn queued(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn on_road(&self) -> usize {
        self.vehicles.len()
    }

    /// spawned = on road + completed + queued.
    pub fn conservation_holds(&self) -> bool {
        self.spawned == (self.on_road() + self.completed_trips.len() + self.queued()) as u64
    }

    pub fn vehicle(&self, id: u64) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn vehicle_mut(&mut self, id: u64) -> Option<&mut Vehicle> {
        self.vehicles.iter_mut().find(|v| v.id == id)
    }

    pub(crate) fn insert_sorted(&mut self, vehicle: Vehicle) {
        let at = self
            .vehicles
            .partition_point(|v| (v.lane, v.position) < (vehicle.lane, vehicle.position));
        self.vehicles.insert(at, vehicle);
    }

    fn resort(&mut self) {
        self.vehicles
            .sort_by(|a, b| a.lane.cmp(&b.lane).then(a.position.total_cmp(&b.position)));
    }

    /// Leader of the vehicle at index `i` in its own lane.
    pub fn leader_of(&self, i: usize) -> Option<Leader> {
        let me = &self.vehicles[i];
        self.vehicles
            .get(i + 1)
            .filter(|l| l.lane == me.lane)
            .map(|l| Leader {
                gap: l.rear() - me.position,
                speed: l.speed,
            })
    }

    /// Acceleration `veh` would choose on `lane` behind `leader`, including
    /// the lane-end obstacle and the braking-distance guard.
    pub fn planned_accel(&self, veh: &Vehicle, lane: Lane, leader: Option<Leader>) -> f64 {
        let d = &self.dynamics;
        let free = self.geometry.speed_limit(lane, veh.position) * veh.speed_factor;
        let mut a = if veh.controller.is_acc() {
            match leader {
                Some(l) => acc_gap_control(
                    l.gap,
                    veh.headway_target,
                    veh.speed,
                    l.speed,
                    free,
                    &d.acc_guard,
                    &d.acc_gains,
                ),
                None => car_following_accel(veh.speed, None, free, &d.acc_guard),
            }
        } else {
            car_following_accel(veh.speed, leader, free, &d.human)
        };
        let mut cap = f64::INFINITY;
        if let Some(l) = leader {
            cap = safe_speed(l.gap, l.speed, self.dt, d.safety_margin);
        }
        if lane == Lane::Ramp {
            let end = Leader {
                gap: self.geometry.merge_end() - veh.position,
                speed: 0.0,
            };
            a = a.min(car_following_accel(
                veh.speed,
                Some(end),
                free,
                &d.acc_guard,
            ));
            cap = cap.min(safe_speed(end.gap, 0.0, self.dt, d.safety_margin));
        }
        a = a.min((cap - veh.speed) / self.dt);
        car_following::clamp_accel(a)
    }

    /// Advances the world by one step of `dt`.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        let dawdle = self.dynamics.human_dawdle;
        let yields = self.yield_leaders();
        let mut accels = Vec::with_capacity(self.vehicles.len());
        for i in 0..self.vehicles.len() {
            let veh = &self.vehicles[i];
            let mut a = self.planned_accel(veh, veh.lane, self.leader_of(i));
            if let Some(y) = yields[i] {
                a = a.min(self.planned_accel(veh, veh.lane, Some(y)));
            }
            if dawdle > 0.0 && !veh.controller.is_acc() {
                let u: f64 = self.streams.driver.random();
                a = car_following::clamp_accel(a - dawdle * MAX_ACCEL * u);
            }
            accels.push(a);
        }
        for (veh, a) in self.vehicles.iter_mut().zip(accels) {
            let v = (veh.speed + a * dt).max(0.0);
            veh.accel = (v - veh.speed) / dt;
            veh.speed = v;
            veh.position += v * dt;
            veh.fuel += fuel_rate(v, veh.accel) * dt;
        }
        self.steps += 1;
        self.clock = self.steps as f64 * dt;
        self.check_no_overlap()?;

        self.apply_lane_changes();
        self.check_no_overlap()?;
        self.remove_exits();
        let (main, ramp) = (self.traffic.main_rate, self.traffic.ramp_rate);
        spawn_arrivals(self, main, ramp, dt);
        Ok(())
    }

    /// Virtual leaders for yielding: the main-lane vehicle that would end up
    /// directly behind a merging vehicle holds back by the gap the merger
    /// needs, as long as that costs at most `cooperation_decel`.
    fn yield_leaders(&self) -> Vec<Option<Leader>> {
        let mut out: Vec<Option<Leader>> = vec![None; self.vehicles.len()];
        let coop = self.dynamics.cooperation_decel;
        if coop <= 0.0 {
            return out;
        }
        let g = &self.geometry;
        let lane0 = Lane::Main(0);
        let start = self.vehicles.partition_point(|v| v.lane < lane0);
        let end = self.vehicles.partition_point(|v| v.lane <= lane0);
        let mergers = self.vehicles[end..]
            .iter()
            .filter(|v| v.lane == Lane::Ramp && g.in_merge_zone(v.position));
        for m in mergers {
            let split = self.vehicles[start..end].partition_point(|v| v.position < m.position);
            let Some(fi) = split.checked_sub(1).map(|j| start + j) else {
                continue;
            };
            let f = &self.vehicles[fi];
            let urgency = (m.position - g.merge_point) / g.accel_lane_length;
            let need = required_gap(
                f.speed,
                m.assertiveness,
                urgency,
                &self.dynamics.lane_change,
            );
            let gap = m.rear() - f.position - need;
            if gap <= 0.0 {
                continue;
            }
            let y = Leader {
                gap,
                speed: m.speed,
            };
            if self.planned_accel(f, lane0, Some(y)) < -coop {
                continue;
            }
            if out[fi].is_none_or(|prev| y.gap < prev.gap) {
                out[fi] = Some(y);
            }
        }
        out
    }

    fn check_no_overlap(&self) -> Result<()> {
        for pair in self.vehicles.windows(2) {
            let (f, l) = (&pair[0], &pair[1]);
            if f.lane == l.lane && l.rear() - f.position <= 0.0 {
                return Err(Error::Invariant(format!(
                    "bumper overlap at t={:.1}s on {:?}: follower {:?} / leader {:?}",
                    self.clock, f.lane, f, l
                )));
            }
        }
        Ok(())
    }

    fn remove_exits(&mut self) {
        let end = self.geometry.segment_length;
        let clock = self.clock;
        let trips = &mut self.completed_trips;
        self.vehicles.retain(|v| {
            if v.lane.is_main() && v.position >= end {
                trips.push(TripRecord {
                    id: v.id,
                    origin: v.origin,
                    controller: v.controller,
                    entry_time: v.entry_time,
                    insert_time: v.insert_time,
                    exit_time: clock,
                    fuel: v.fuel,
                });
                false
            } else {
                true
            }
        });
    }

    fn apply_lane_changes(&mut self) {
        let params = self.dynamics.lane_change;
        let ids: Vec<u64> = self.vehicles.iter().map(|v| v.id).collect();
        for id in ids {
            let Some(i) = self.vehicles.iter().position(|v| v.id == id) else {
                continue;
            };
            if self.clock - self.vehicles[i].last_lane_change < params.cooldown {
                continue;
            }
            let jitter = if self.vehicles[i].lane.is_main() && params.discretionary {
                params.threshold * (self.streams.lane_change.random::<f64>() - 0.5)
            } else {
                0.0
            };
            let Some(n) = self.neighborhood(i, jitter) else {
                continue;
            };
            let veh = &self.vehicles[i];
            let target = match (
                lane_change_decision(&n, veh.assertiveness, &params),
                veh.lane,
            ) {
                (LaneChange::Stay, _) => continue,
                (LaneChange::Left, Lane::Ramp) => Lane::Main(0),
                (LaneChange::Left, Lane::Main(k)) => Lane::Main(k + 1),
                (LaneChange::Right, Lane::Main(k)) if k > 0 => Lane::Main(k - 1),
                _ => continue,
            };
            let clock = self.clock;
            let veh = &mut self.vehicles[i];
            veh.lane = target;
            veh.last_lane_change = clock;
            self.resort();
        }
    }

    /// Lane-change inputs for the vehicle at index `i`, or `None` if it has
    /// no lane to move into.
    pub fn neighborhood(&self, i: usize, threshold_jitter: f64) -> Option<Neighborhood> {
        let veh = &self.vehicles[i];
        let leader = self.leader_of(i);
        let own_accel = self.planned_accel(veh, veh.lane, leader);
        match veh.lane {
            Lane::Ramp => {
                if !self.geometry.in_merge_zone(veh.position) {
                    return None;
                }
                let urgency =
                    (veh.position - self.geometry.merge_point) / self.geometry.accel_lane_length;
                Some(Neighborhood {
                    own_accel,
                    old_follower_gain: 0.0,
                    left: Some(self.target_lane(i, Lane::Main(0))),
                    right: None,
                    mandatory_urgency: Some(urgency.clamp(0.0, 1.0)),
                    threshold_jitter: 0.0,
                })
            }
            Lane::Main(k) => {
                if !self.dynamics.lane_change.discretionary {
                    return None;
                }
                let left = (k + 1 < self.geometry.main_lane_count)
                    .then(|| self.target_lane(i, Lane::Main(k + 1)));
                let right = (k > 0).then(|| self.target_lane(i, Lane::Main(k - 1)));
                if left.is_none() && right.is_none() {
                    return None;
                }
                let old_follower_gain = match i.checked_sub(1).map(|f| &self.vehicles[f]) {
                    Some(f) if f.lane == veh.lane => {
                        let now = Leader {
                            gap: veh.rear() - f.position,
                            speed: veh.speed,
                        };
                        let after = self.leader_of(i).map(|l| Leader {
                            gap: l.gap + veh.length + now.gap,
                            speed: l.speed,
                        });
                        self.planned_accel(f, f.lane, after)
                            - self.planned_accel(f, f.lane, Some(now))
                    }
                    _ => 0.0,
                };
                Some(Neighborhood {
                    own_accel,
                    old_follower_gain,
                    left,
                    right,
                    mandatory_urgency: None,
                    threshold_jitter,
                })
            }
        }
    }

    fn target_lane(&self, i: usize, lane: Lane) -> TargetLane {
        let veh = &self.vehicles[i];
        let x = veh.position;
        let start = self.vehicles.partition_point(|v| v.lane < lane);
        let end = self.vehicles.partition_point(|v| v.lane <= lane);
        let in_lane = &self.vehicles[start..end];
        let split = in_lane.partition_point(|v| v.position < x);
        let leader = in_lane.get(split);
        let follower = split.checked_sub(1).map(|j| &in_lane[j]);
        let margin = self.dynamics.safety_margin;

        let mut t = TargetLane {
            own_speed: veh.speed,
            ..TargetLane::open()
        };
        let mut safe = true;
        if let Some(l) = leader {
            t.front_gap = l.rear() - x;
            t.own_accel = self.planned_accel(
                veh,
                lane,
                Some(Leader {
                    gap: t.front_gap,
                    speed: l.speed,
                }),
            );
            safe &= t.front_gap > 0.0
                && braking_slack(t.front_gap, veh.speed, l.speed, self.dt) >= margin;
        } else {
            t.own_accel = self.planned_accel(veh, lane, None);
        }
        if let Some(f) = follower {
            t.rear_gap = veh.rear() - f.position;
            t.follower_speed = f.speed;
            t.follower_accel = self.planned_accel(
                f,
                lane,
                Some(Leader {
                    gap: t.rear_gap,
                    speed: veh.speed,
                }),
            );
            let before = leader.map(|l| Leader {
                gap: l.rear() - f.position,
                speed: l.speed,
            });
            t.follower_accel_before = self.planned_accel(f, lane, before);
            safe &= t.rear_gap > 0.0
                && braking_slack(t.rear_gap, f.speed, veh.speed, self.dt) >= margin;
        }
        t.braking_safe = safe;
        t
    }

    /// Instantaneous (lane, position, speed) of every vehicle on the road.
    pub fn speed_samples(&self) -> impl Iterator<Item = (Lane, f64, f64)> + '_ {
        self.vehicles.iter().map(|v| (v.lane, v.position, v.speed))
    }
}
