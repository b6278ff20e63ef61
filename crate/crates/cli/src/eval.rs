use std::path::Path;

use anyhow::Result;
use rampflow::mdp::Episode;
use rampflow::RunReport;
use rayon::prelude::*;
use serde_json::json;

use crate::output::{cell, OutDir};
use crate::runner::{self, ControllerKind, Controllers};

pub fn run(
    config: Option<&Path>,
    seed: Option<u64>,
    model: Option<&Path>,
    jobs: usize,
    out: &Path,
) -> Result<()> {
    let cfg = runner::resolve(runner::load_config(config)?, seed)?;
    let kind = ControllerKind::of(&cfg.controller);
    let mut controllers = Controllers::from_config(&cfg);
    if kind == ControllerKind::Dacc {
        controllers.load_model(&cfg, model)?;
    }
    let out = OutDir::create(out, &cfg)?;

    let scenario = cfg.scenario();
    let mut first = scenario.clone();
    first.record_grid = true;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let episodes: Vec<Episode> = pool.install(|| {
        (0..cfg.run.eval_runs)
            .into_par_iter()
            .map(|i| {
                let sc = if i == 0 { &first } else { &scenario };
                controllers.run(sc, runner::run_seed(cfg.run.seed, i), kind)
            })
            .collect::<Result<_>>()
    })?;
    let reports: Vec<&RunReport> = episodes.iter().map(|e| &e.report).collect();
    for (i, r) in reports.iter().enumerate() {
        log::info!(
            "run {i} seed {}: avg speed {} m/s, avg delay {} s",
            r.seed,
            cell(r.avg_speed),
            cell(r.avg_delay)
        );
    }

    let columns: Vec<Vec<Option<f64>>> = reports.iter().map(|r| numeric(r)).collect();
    let (mean, stdev) = summarize(&columns);
    let mut header = vec!["run"];
    header.extend(RunReport::CSV_COLUMNS);
    let mut rows: Vec<Vec<String>> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            std::iter::once(i.to_string())
                .chain(r.csv_values())
                .collect()
        })
        .collect();
    for (label, stats) in [("mean", &mean), ("stdev", &stdev)] {
        // The seed column has no meaningful aggregate.
        rows.push(
            std::iter::once(label.to_string())
                .chain(std::iter::once(String::new()))
                .chain(stats[1..].iter().map(|v| cell(*v)))
                .collect(),
        );
    }
    out.write_csv("report.csv", &header, rows)?;

    let stat_map = |stats: &[Option<f64>]| -> serde_json::Map<String, serde_json::Value> {
        RunReport::CSV_COLUMNS
            .iter()
            .skip(1)
            .zip(&stats[1..])
            .map(|(k, v)| (k.to_string(), json!(v)))
            .collect()
    };
    out.write_json(
        "report.json",
        &json!({ "controller": kind.name(), "runs": reports, "mean": stat_map(&mean), "stdev": stat_map(&stdev) }),
    )?;

    let head = &episodes[0];
    if let Some(grid) = &head.report.space_time_grid {
        out.write_csv_text("grid.csv", &grid.to_csv())?;
    }
    out.write_jsonl("trajectory.jsonl", &head.trajectory)?;
    out.write_json(
        "bulletins.json",
        &json!({ "run": 0, "run_seed": head.report.seed, "bulletins": head.bulletins }),
    )?;
    Ok(())
}

/// The report's CSV columns as numbers.
fn numeric(r: &RunReport) -> Vec<Option<f64>> {
    vec![
        Some(r.seed as f64),
        r.avg_speed,
        r.avg_main_speed,
        r.avg_delay,
        r.avg_fuel,
        Some(r.completed as f64),
        Some(r.queued as f64),
        Some(r.on_road as f64),
        Some(r.spawned as f64),
        r.mean_reward,
    ]
}

/// Column-wise mean and sample standard deviation, ignoring missing values.
fn summarize(rows: &[Vec<Option<f64>>]) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|c| {
            let xs: Vec<f64> = rows.iter().filter_map(|r| r[c]).collect();
            let n = xs.len() as f64;
            let mean = (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / n);
            let sd = mean
                .filter(|_| xs.len() > 1)
                .map(|m| (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
            (mean, sd)
        })
        .unzip()
}
