//! Reported quantities: speed, delay, fuel proxy, space-time speed grids and
//! decision latency. Every aggregate here is a pure function of raw logs.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::world::{Controller, Lane, RoadGeometry, TripRecord};

/// Polynomial fuel proxy (VT-Micro flavoured). Units are arbitrary and only
/// meaningful for relative comparisons between runs.
pub const FUEL_IDLE: f64 = 0.1;
pub const FUEL_LINEAR: f64 = 0.01;
pub const FUEL_CUBIC: f64 = 0.00003;
pub const FUEL_ACCEL: f64 = 0.08;

/// Instantaneous consumption rate (units per second).
pub fn fuel_rate(v: f64, a: f64) -> f64 {
    let r = FUEL_IDLE + FUEL_LINEAR * v + FUEL_CUBIC * v.powi(3) + FUEL_ACCEL * a.max(0.0) * v;
    r.max(FUEL_IDLE)
}

/// Integrated proxy consumption over aligned speed/acceleration traces.
pub fn fuel_proxy(speeds: &[f64], accels: &[f64], dt: f64) -> f64 {
    assert_eq!(
        speeds.len(),
        accels.len(),
        "speed and accel traces must align"
    );
    speeds
        .iter()
        .zip(accels)
        .map(|(&v, &a)| fuel_rate(v, a) * dt)
        .sum()
}

/// One observation of one vehicle, taken each action interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub lane: Lane,
}

/// Half-open time window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn all() -> Self {
        Self {
            start: f64::NEG_INFINITY,
            end: f64::INFINITY,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Time-and-vehicle mean of sampled speeds; `None` for an empty window.
pub fn avg_speed(samples: &[SpeedSample], window: Window) -> Option<f64> {
    mean(samples.iter().filter(|s| window.contains(s.t)).map(|s| s.v))
}

/// Like [`avg_speed`] restricted to main-lane samples.
pub fn avg_main_speed(samples: &[SpeedSample], window: Window) -> Option<f64> {
    mean(
        samples
            .iter()
            .filter(|s| s.lane.is_main() && window.contains(s.t))
            .map(|s| s.v),
    )
}

/// Travel time above free flow for one trip, floored at zero.
pub fn trip_delay(trip: &TripRecord, geometry: &RoadGeometry) -> f64 {
    (trip.travel_time() - geometry.free_flow_time(trip.origin)).max(0.0)
}

/// Mean delay over trips finishing inside `window`; `None` if there are none.
pub fn avg_delay(trips: &[TripRecord], window: Window, geometry: &RoadGeometry) -> Option<f64> {
    mean(
        trips
            .iter()
            .filter(|t| window.contains(t.exit_time))
            .map(|t| trip_delay(t, geometry)),
    )
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean speed per space-time cell. Rows are space bins from the segment
/// origin, columns are time bins from t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub cell_length: f64,
    pub cell_duration: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major; `None` marks a cell nobody visited.
    pub cells: Vec<Option<f64>>,
}

impl SpaceTimeGrid {
    pub fn cell_of(&self, t: f64, x: f64) -> Option<(usize, usize)> {
        if t < 0.0 || x < 0.0 {
            return None;
        }
        let (r, c) = (
            (x / self.cell_length).floor() as usize,
            (t / self.cell_duration).floor() as usize,
        );
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.cols + col]
    }

    /// CSV matrix: a header of time-bin starts, then one row per space bin
    /// led by its position. Empty cells are left blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_m");
        for c in 0..self.cols {
            out.push_str(&format!(",{}", c as f64 * self.cell_duration));
        }
        out.push('\n');
        for r in 0..self.rows {
            out.push_str(&format!("{}", r as f64 * self.cell_length));
            for c in 0..self.cols {
                match self.get(r, c) {
                    Some(v) => out.push_str(&format!(",{v:.3}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Bins main-lane samples into 10 m x 1 s cells covering the segment.
pub fn space_time_grid(
    samples: &[SpeedSample],
    geometry: &RoadGeometry,
    duration: f64,
) -> SpaceTimeGrid {
    let (cell_length, cell_duration) = (10.0, 1.0);
    let rows = (geometry.segment_length / cell_length).ceil() as usize;
    let cols = (duration / cell_duration).ceil().max(1.0) as usize;
    let mut sums = vec![(0.0, 0u32); rows * cols];
    let mut grid = SpaceTimeGrid {
        cell_length,
        cell_duration,
        rows,
        cols,
        cells: vec![None; rows * cols],
    };
    for s in samples.iter().filter(|s| s.lane.is_main()) {
        if let Some((r, c)) = grid.cell_of(s.t, s.x) {
            let cell = &mut sums[r * cols + c];
            cell.0 += s.v;
            cell.1 += 1;
        }
    }
    for (out, (sum, n)) in grid.cells.iter_mut().zip(sums) {
        *out = (n > 0).then(|| sum / n as f64);
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub trials: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencySummary {
    /// Nearest-rank percentiles over the given durations.
    pub fn from_durations(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let rank =
            |p: f64| ms[((p / 100.0 * ms.len() as f64).ceil() as usize).clamp(1, ms.len()) - 1];
        Some(Self {
            trials: ms.len(),
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            p50_ms: rank(50.0),
            p95_ms: rank(95.0),
            max_ms: *ms.last().unwrap(),
        })
    }
}

/// Times `decide` end to end `n_trials` times.
pub fn decision_latency<F: FnMut()>(
    n_trials: usize,
    mut decide: F,
) -> (LatencySummary, Vec<Duration>) {
    let samples: Vec<Duration> = (0..n_trials.max(1))
        .map(|_| {
            let start = Instant::now();
            decide();
            start.elapsed()
        })
        .collect();
    (
        LatencySummary::from_durations(&samples).expect("at least one trial"),
        samples,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerBreakdown {
    pub controller: Controller,
    pub completed: usize,
    pub avg_delay: Option<f64>,
    pub avg_fuel: Option<f64>,
}

/// Everything measured in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub avg_speed: Option<f64>,
    pub avg_main_speed: Option<f64>,
    pub avg_delay: Option<f64>,
    pub avg_fuel: Option<f64>,
    pub completed: usize,
    pub queued: usize,
    pub on_road: usize,
    pub spawned: u64,
    pub mean_reward: Option<f64>,
    pub per_controller: Vec<ControllerBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision_latency: Option<LatencySummary>,
    #[serde(skip)]
    pub space_time_grid: Option<SpaceTimeGrid>,
}

impl RunReport {
    pub const CSV_COLUMNS: [&'static str; 10] = [
        "seed",
        "avg_speed",
        "avg_main_speed",
        "avg_delay",
        "avg_fuel",
        "completed",
        "queued",
        "on_road",
        "spawned",
        "mean_reward",
    ];

    /// Values in [`Self::CSV_COLUMNS`] order; absent metrics are empty.
    pub fn csv_values(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        vec![
            self.seed.to_string(),
            opt(self.avg_speed),
            opt(self.avg_main_speed),
            opt(self.avg_delay),
            opt(self.avg_fuel),
            self.completed.to_string(),
            self.queued.to_string(),
            self.on_road.to_string(),
            self.spawned.to_string(),
            opt(self.mean_reward),
        ]
    }

    pub fn conservation_holds(&self) -> bool {
        self.spawned == (self.completed + self.on_road + self.queued) as u64
    }
}

/// Per-controller delay and fuel over trips finishing in `window`.
pub fn controller_breakdown(
    trips: &[TripRecord],
    window: Window,
    geometry: &RoadGeometry,
) -> Vec<ControllerBreakdown> {
    Controller::ALL
        .iter()
        .filter_map(|&c| {
            let mine: Vec<&TripRecord> = trips
                .iter()
                .filter(|t| t.controller == c && window.contains(t.exit_time))
                .collect();
            (!mine.is_empty()).then(|| ControllerBreakdown {
                controller: c,
                completed: mine.len(),
                avg_delay: mean(mine.iter().map(|t| trip_delay(t, geometry))),
                avg_fuel: mean(mine.iter().map(|t| t.fuel)),
            })
        })
        .collect()
}

/// Mean fuel per trip over trips finishing in `window`.
pub fn avg_fuel(trips: &[TripRecord], window: Window) -> Option<f64> {
    mean(
        trips
            .iter()
            .filter(|t| window.contains(t.exit_time))
            .map(|t| t.fuel),
    )
}
