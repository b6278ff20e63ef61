use std::hint::black_box;
use std::path::Path;

use anyhow::{Context, Result};
use rampflow::dqn::argmax;
use rampflow::mdp::{featurize, run_episode, EquippedPolicy, Scenario, FALLBACK_HEADWAY};
use rampflow::metrics::decision_latency;

use crate::output::OutDir;
use crate::runner::{self, Controllers};

/// Seconds of traffic simulated to obtain a realistic bulletin to decide on.
const PRIMING_HORIZON: f64 = 60.0;

pub fn run(
    config: Option<&Path>,
    seed: Option<u64>,
    model: Option<&Path>,
    trials: usize,
    out: &Path,
) -> Result<()> {
    let cfg = runner::resolve(runner::load_config(config)?, seed)?;
    let mut controllers = Controllers::from_config(&cfg);
    controllers.load_model(&cfg, model)?;
    let out = OutDir::create(out, &cfg)?;
    let (file, net) = controllers.model.as_ref().expect("model loaded");

    let priming = Scenario {
        horizon: PRIMING_HORIZON.min(cfg.run.horizon),
        ..cfg.scenario()
    };
    let episode = run_episode(
        &priming,
        cfg.run.seed,
        EquippedPolicy::Fixed(FALLBACK_HEADWAY),
    )?;
    let bulletin = *episode
        .bulletins
        .last()
        .context("priming run produced no bulletin")?;
    let norm = file.normalization;

    let (summary, samples) = decision_latency(trials, || {
        let s = featurize(black_box(&bulletin), &norm);
        black_box(argmax(&net.forward(s.as_slice())));
    });
    log::info!(
        "{} trials: mean {:.4} ms, p50 {:.4} ms, p95 {:.4} ms, max {:.4} ms",
        summary.trials,
        summary.mean_ms,
        summary.p50_ms,
        summary.p95_ms,
        summary.max_ms
    );

    let mut rows: Vec<[String; 2]> = samples
        .iter()
        .enumerate()
        .map(|(i, d)| [(i + 1).to_string(), format!("{:.6}", d.as_secs_f64() * 1e3)])
        .collect();
    for (label, v) in [
        ("mean", summary.mean_ms),
        ("p50", summary.p50_ms),
        ("p95", summary.p95_ms),
        ("max", summary.max_ms),
    ] {
        rows.push([label.to_string(), format!("{v:.6}")]);
    }
    out.write_csv("latency.csv", &["trial", "ms"], rows)?;
    out.write_json("latency.json", &summary)?;
    Ok(())
}
