//! Controller selection and seeded episode execution shared by the commands.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use rampflow::dqn::{load_model, GreedyAgent, ModelFile};
use rampflow::mdp::{run_episode, Episode, EquippedPolicy, Scenario, FALLBACK_HEADWAY};
use rampflow::rng::derive_seed;
use rampflow::{ControllerConfig, QNetwork, RunConfig, ThresholdAccConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    Dacc,
    Fixed,
    Threshold,
}

impl ControllerKind {
    pub fn of(cfg: &ControllerConfig) -> Self {
        match cfg {
            ControllerConfig::DAcc { .. } => ControllerKind::Dacc,
            ControllerConfig::Fixed { .. } => ControllerKind::Fixed,
            ControllerConfig::Threshold(_) => ControllerKind::Threshold,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Dacc => "dacc",
            ControllerKind::Fixed => "fixed",
            ControllerKind::Threshold => "threshold",
        }
    }
}

/// Settings for every controller a command may run. Controllers not named in
/// the config fall back to defaults: a 10 m fixed headway and the default
/// threshold rule.
#[derive(Debug, Clone)]
pub struct Controllers {
    pub model: Option<(ModelFile, QNetwork)>,
    pub fixed_headway: f64,
    pub threshold: ThresholdAccConfig,
}

impl Controllers {
    pub fn from_config(cfg: &RunConfig) -> Self {
        let fixed_headway = match cfg.controller {
            ControllerConfig::Fixed { headway } => headway,
            _ => FALLBACK_HEADWAY,
        };
        let threshold = match &cfg.controller {
            ControllerConfig::Threshold(t) => *t,
            _ => ThresholdAccConfig::default(),
        };
        Self {
            model: None,
            fixed_headway,
            threshold,
        }
    }

    /// Loads the D-ACC model from `override_path` or the config and checks it
    /// against the configured action set.
    pub fn load_model(&mut self, cfg: &RunConfig, override_path: Option<&Path>) -> Result<()> {
        let path = model_path(cfg, override_path)?;
        let loaded = load_model(&path, Some(&cfg.mdp.actions))
            .with_context(|| format!("loading {}", path.display()))?;
        self.model = Some(loaded);
        Ok(())
    }

    /// Runs one episode of `scenario` with `kind` on the equipped vehicles.
    pub fn run(&self, scenario: &Scenario, seed: u64, kind: ControllerKind) -> Result<Episode> {
        let episode = match kind {
            ControllerKind::Fixed => {
                run_episode(scenario, seed, EquippedPolicy::Fixed(self.fixed_headway))?
            }
            ControllerKind::Threshold => {
                run_episode(scenario, seed, EquippedPolicy::Threshold(self.threshold))?
            }
            ControllerKind::Dacc => {
                let (file, net) = self
                    .model
                    .as_ref()
                    .ok_or_else(|| anyhow!("the dacc controller needs a model"))?;
                let mut scenario = scenario.clone();
                scenario.normalization = file.normalization;
                let mut agent = GreedyAgent(net);
                run_episode(&scenario, seed, EquippedPolicy::Learned(&mut agent))?
            }
        };
        Ok(episode)
    }
}

pub fn model_path(cfg: &RunConfig, override_path: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = override_path {
        return Ok(p.to_path_buf());
    }
    match &cfg.controller {
        ControllerConfig::DAcc { model: Some(p) } => Ok(p.clone()),
        _ => bail!("no model given: pass --model or set controller.model"),
    }
}

/// Seed of the `index`-th evaluation run. Sweeps reuse the same seeds at
/// every point.
pub fn run_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64)
}

/// Applies `--seed` and validates, logging range warnings.
pub fn resolve(mut cfg: RunConfig, seed: Option<u64>) -> Result<RunConfig> {
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}
