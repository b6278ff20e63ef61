use std::path::Path;

use anyhow::Result;
use rampflow::dqn::{init_network, save_model, train, DqnLearner, ModelFile, ScenarioEnv};

use crate::output::OutDir;
use crate::runner;

pub fn run(
    config: Option<&Path>,
    seed: Option<u64>,
    episodes: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg = runner::load_config(config)?;
    if let Some(e) = episodes {
        cfg.run.episodes = e;
    }
    let cfg = runner::resolve(cfg, seed)?;
    let out = OutDir::create(out, &cfg)?;
    if cfg.traffic.penetration == 0.0 {
        log::warn!("penetration is 0: no equipped vehicles, nothing to learn from");
    }

    let seed = cfg.run.seed;
    let scenario = cfg.scenario();
    let net = init_network(&cfg.dqn, scenario.actions.len(), seed)?;
    let mut learner = DqnLearner::new(net, cfg.dqn.clone(), seed)?;
    let mut env = ScenarioEnv {
        scenario: scenario.clone(),
        seed,
        demand_spread: cfg.run.demand_spread,
    };
    let every = (cfg.run.episodes / 20).max(1);
    let curve = train(&mut env, &mut learner, cfg.run.episodes, |p| {
        if p.episode % every == 0 || p.episode == 1 {
            log::info!(
                "episode {} mean reward {:.3} epsilon {:.4}",
                p.episode,
                p.mean_reward,
                p.epsilon
            );
        }
    })?;

    let mut model = ModelFile::new(&learner.online, &scenario.actions, &scenario.normalization);
    model.provenance = Some(out.provenance().json());
    save_model(&out.path("model.json"), &model)?;
    out.write_csv(
        "reward_curve.csv",
        &["episode", "mean_reward", "epsilon"],
        curve.iter().map(|p| {
            [
                p.episode.to_string(),
                format!("{:.6}", p.mean_reward),
                format!("{:.6e}", p.epsilon),
            ]
        }),
    )?;
    log::info!(
        "wrote {} and {}",
        out.path("model.json").display(),
        out.path("reward_curve.csv").display()
    );
    Ok(())
}
