//! Poisson demand at the two entries, with deferred insertion.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::car_following::{braking_slack, MIN_HEADWAY, VEHICLE_LENGTH};
use super::vehicle::{Controller, Lane, Origin, Vehicle};
use super::WorldState;

/// Demand that has arrived but could not yet enter the road.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingArrival {
    pub demand_time: f64,
    pub equipped: bool,
    pub speed_factor: f64,
}

/// Per-step arrival probability for a lane carrying `rate` veh/h.
pub fn arrival_probability(rate: f64, dt: f64) -> f64 {
    (rate * dt / 3600.0).clamp(0.0, 1.0)
}

/// Draws new demand for every entry lane, then inserts queued vehicles where
/// the entry gap allows. `main_rate` applies to each main lane.
pub fn spawn_arrivals(world: &mut WorldState, main_rate: f64, ramp_rate: f64, dt: f64) {
    let lanes = world.geometry.main_lane_count as usize;
    let per_main = arrival_probability(main_rate, dt);
    let ramp = arrival_probability(ramp_rate, dt);
    let sd = world.dynamics.speed_factor_sd;
    let penetration = world.traffic.penetration;

    for q in 0..=lanes {
        let p = if q < lanes { per_main } else { ramp };
        if p <= 0.0 {
            continue;
        }
        let rng = &mut world.streams.arrivals;
        if rng.random::<f64>() < p {
            let equipped = rng.random::<f64>() < penetration;
            let factor = if sd > 0.0 {
                let normal = Normal::new(1.0, sd).expect("finite sd");
                normal.sample(rng).clamp(1.0 - 2.0 * sd, 1.0 + 2.0 * sd)
            } else {
                1.0
            };
            world.queues[q].push_back(PendingArrival {
                demand_time: world.clock,
                equipped,
                speed_factor: factor,
            });
            world.spawned += 1;
        }
    }

    for q in 0..=lanes {
        let lane = if q < lanes {
            Lane::Main(q as u8)
        } else {
            Lane::Ramp
        };
        if let Some(head) = world.queues[q].front().cloned() {
            if try_insert(world, lane, &head) {
                world.queues[q].pop_front();
            }
        }
    }
}

fn try_insert(world: &mut WorldState, lane: Lane, pending: &PendingArrival) -> bool {
    let g = &world.geometry;
    let x0 = g.entry_position(lane);
    let desired = g.speed_limit(lane, x0) * pending.speed_factor;
    let dyn_ = &world.dynamics;

    let leader = world.vehicles.iter().find(|v| v.lane == lane);
    let speed = match leader {
        None => desired,
        Some(l) => {
            let gap = l.rear() - x0;
            let speed = if gap < 3.0 * desired {
                desired.min(l.speed)
            } else {
                desired
            };
            let enough = gap >= MIN_HEADWAY + speed * dyn_.insertion_time_gap
                && braking_slack(gap, speed, l.speed, world.dt) >= 2.0 * dyn_.safety_margin;
            if !enough {
                return false;
            }
            speed
        }
    };

    let controller = if pending.equipped {
        world.equipment.controller
    } else {
        Controller::Human
    };
    let headway_target = if controller.is_acc() {
        world.equipment.initial_headway
    } else {
        MIN_HEADWAY
    };
    let origin = if lane.is_main() {
        Origin::Main
    } else {
        Origin::Ramp
    };
    let vehicle = Vehicle {
        id: world.next_id,
        lane,
        position: x0,
        speed,
        accel: 0.0,
        length: VEHICLE_LENGTH,
        headway_target,
        controller,
        entry_time: pending.demand_time,
        insert_time: world.clock,
        assertiveness: world.traffic.assertiveness,
        origin,
        speed_factor: pending.speed_factor,
        bulletin: None,
        last_lane_change: f64::NEG_INFINITY,
        fuel: 0.0,
    };
    world.next_id += 1;
    world.insert_sorted(vehicle);
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_conversion() {
        assert!((arrival_probability(3600.0, 0.1) - 0.1).abs() < 1e-15);
        assert_eq!(arrival_probability(0.0, 0.1), 0.0);
    }
}
