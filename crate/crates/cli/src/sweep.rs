//! Long-format parameter sweeps: one CSV row per (value, controller, run).

use std::path::Path;

use anyhow::{bail, Result};
use clap::ValueEnum;
use rampflow::{ControllerConfig, RunConfig, RunReport};
use rayon::prelude::*;

use crate::output::OutDir;
use crate::runner::{self, ControllerKind, Controllers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Axis {
    Headway,
    Penetration,
    RampRate,
    MainRate,
    LaneLength,
    Assertiveness,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Headway => "headway",
            Axis::Penetration => "penetration",
            Axis::RampRate => "ramp_rate",
            Axis::MainRate => "main_rate",
            Axis::LaneLength => "lane_length",
            Axis::Assertiveness => "assertiveness",
        }
    }

    /// `cfg` with this axis set to `value`.
    pub fn apply(self, cfg: &RunConfig, value: f64) -> RunConfig {
        let mut cfg = cfg.clone();
        match self {
            Axis::Headway => cfg.controller = ControllerConfig::Fixed { headway: value },
            Axis::Penetration => cfg.traffic.penetration = value,
            Axis::RampRate => cfg.traffic.ramp_rate = value,
            Axis::MainRate => cfg.traffic.main_rate = value,
            Axis::LaneLength => cfg.geometry.accel_lane_length = value,
            Axis::Assertiveness => cfg.traffic.assertiveness = value,
        }
        cfg
    }
}

pub const COLUMNS_BEFORE_REPORT: [&str; 6] =
    ["axis", "value", "controller", "run", "status", "error"];

pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    let values = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| anyhow::anyhow!("bad sweep value {s:?}: {e}"))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("invalid configuration: --values is empty");
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy)]
struct Point {
    value: f64,
    controller: ControllerKind,
    run: usize,
}

pub struct SweepArgs<'a> {
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub axis: Axis,
    pub values: &'a str,
    pub controllers: &'a [ControllerKind],
    pub model: Option<&'a Path>,
    pub jobs: usize,
    pub out: &'a Path,
}

pub fn run(args: SweepArgs<'_>) -> Result<()> {
    let cfg = runner::resolve(runner::load_config(args.config)?, args.seed)?;
    let values = parse_values(args.values)?;
    let kinds: Vec<ControllerKind> = if args.axis == Axis::Headway {
        if args.controllers.iter().any(|&k| k != ControllerKind::Fixed) {
            bail!("the headway axis sweeps the fixed controller only");
        }
        vec![ControllerKind::Fixed]
    } else if args.controllers.is_empty() {
        vec![ControllerKind::of(&cfg.controller)]
    } else {
        args.controllers.to_vec()
    };
    let mut controllers = Controllers::from_config(&cfg);
    if kinds.contains(&ControllerKind::Dacc) {
        controllers.load_model(&cfg, args.model)?;
    }
    let out = OutDir::create(args.out, &cfg)?;

    let points: Vec<Point> = values
        .iter()
        .flat_map(|&value| {
            kinds.iter().flat_map(move |&controller| {
                (0..cfg.run.eval_runs).map(move |run| Point {
                    value,
                    controller,
                    run,
                })
            })
        })
        .collect();
    log::info!("sweeping {} over {} points", args.axis.name(), points.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()?;
    let rows: Vec<Vec<String>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| row(&cfg, args.axis, p, &controllers))
            .collect()
    });

    let mut header: Vec<&str> = COLUMNS_BEFORE_REPORT.to_vec();
    header.extend(RunReport::CSV_COLUMNS);
    out.write_csv("sweep.csv", &header, rows)?;
    Ok(())
}

fn row(base: &RunConfig, axis: Axis, p: &Point, controllers: &Controllers) -> Vec<String> {
    let cfg = axis.apply(base, p.value);
    let seed = runner::run_seed(base.run.seed, p.run);
    let mut ctl = controllers.clone();
    if axis == Axis::Headway {
        ctl.fixed_headway = p.value;
    }
    let result = cfg
        .validate()
        .map_err(anyhow::Error::from)
        .and_then(|_| ctl.run(&cfg.scenario(), seed, p.controller));
    let mut cells = vec![
        axis.name().to_string(),
        p.value.to_string(),
        p.controller.name().to_string(),
        p.run.to_string(),
    ];
    match result {
        Ok(ep) => {
            cells.extend(["ok".to_string(), String::new()]);
            cells.extend(ep.report.csv_values());
        }
        Err(e) => {
            log::warn!(
                "{} = {} ({}, run {}) failed: {e:#}",
                axis.name(),
                p.value,
                p.controller.name(),
                p.run
            );
            cells.extend(["failed".to_string(), format!("{e:#}")]);
            cells.push(seed.to_string());
            cells.extend(std::iter::repeat_n(
                String::new(),
                RunReport::CSV_COLUMNS.len() - 1,
            ));
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("2.5, 5,7.5").unwrap(), vec![2.5, 5.0, 7.5]);
        assert!(parse_values("").is_err());
        assert!(parse_values(" , ").is_err());
        assert!(parse_values("1,x").is_err());
    }

    #[test]
    fn axes_touch_the_right_field() {
        let cfg = RunConfig::default();
        assert_eq!(Axis::RampRate.apply(&cfg, 400.0).traffic.ramp_rate, 400.0);
        assert_eq!(
            Axis::LaneLength
                .apply(&cfg, 50.0)
                .geometry
                .accel_lane_length,
            50.0
        );
        assert_eq!(
            Axis::Headway.apply(&cfg, 12.5).controller,
            ControllerConfig::Fixed { headway: 12.5 }
        );
        assert_eq!(Axis::Penetration.apply(&cfg, 0.6).traffic.penetration, 0.6);
    }

    #[test]
    fn invalid_point_becomes_failed_row() {
        let mut cfg = RunConfig::default();
        cfg.run.horizon = 5.0;
        let ctl = Controllers::from_config(&cfg);
        let p = Point {
            value: 1.5,
            controller: ControllerKind::Fixed,
            run: 0,
        };
        let cells = row(&cfg, Axis::Penetration, &p, &ctl);
        assert_eq!(
            cells.len(),
            COLUMNS_BEFORE_REPORT.len() + RunReport::CSV_COLUMNS.len()
        );
        assert_eq!(cells[4], "failed");
        assert!(cells[5].contains("penetration"));
    }
}
