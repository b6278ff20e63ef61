//! JSON run configuration. Every block has defaults, so `{}` is a complete
//! config; [`RunConfig::resolved_json`] echoes the filled-in result.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::ThresholdAccConfig;
use crate::dqn::Hyperparams;
use crate::error::{Error, Result};
use crate::mdp::{ActionSet, Normalization, RewardConfig, Scenario};
use crate::v2x::RsuConfig;
use crate::world::{Dynamics, RoadGeometry, TrafficParams, MIN_HEADWAY};

/// Controller carried by equipped vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControllerConfig {
    /// Learned headway selection. `model` is required for evaluation.
    #[serde(rename = "dacc")]
    DAcc {
        #[serde(default)]
        model: Option<PathBuf>,
    },
    Fixed {
        headway: f64,
    },
    Threshold(ThresholdAccConfig),
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig::DAcc { model: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct MdpConfig {
    pub actions: ActionSet,
    pub reward: RewardConfig,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunBlock {
    /// Simulated seconds per run or training episode.
    pub horizon: f64,
    /// Leading seconds excluded from reported metrics.
    pub warmup: f64,
    pub episodes: u64,
    pub seed: u64,
    pub dt: f64,
    pub action_interval: f64,
    /// Seeded repetitions per evaluation or sweep point.
    pub eval_runs: usize,
    /// Per-episode uniform demand scaling during training, as a relative half-width.
    pub demand_spread: f64,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            horizon: 300.0,
            warmup: 0.0,
            episodes: 1000,
            seed: 1,
            dt: 0.1,
            action_interval: 1.0,
            eval_runs: 5,
            demand_spread: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub geometry: RoadGeometry,
    pub traffic: TrafficParams,
    pub controller: ControllerConfig,
    pub mdp: MdpConfig,
    pub dqn: Hyperparams,
    pub v2x: RsuConfig,
    pub dynamics: Dynamics,
    pub run: RunBlock,
}

/// Ranges the scenario was designed for; values outside only warn.
pub const MAIN_RATE_RANGE: (f64, f64) = (900.0, 3700.0);
pub const RAMP_RATE_RANGE: (f64, f64) = (200.0, 900.0);
pub const ACCEL_LANE_RANGE: (f64, f64) = (50.0, 180.0);

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Rejects unusable values and returns warnings for out-of-range ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.geometry.validate()?;
        self.traffic.validate()?;
        self.mdp.reward.validate()?;
        self.dqn.validate()?;
        self.v2x.validate()?;
        match &self.controller {
            ControllerConfig::Fixed { headway }
                if !(*headway >= MIN_HEADWAY && headway.is_finite()) =>
            {
                return Err(Error::Config(format!(
                    "fixed headway must be >= {MIN_HEADWAY} m"
                )));
            }
            ControllerConfig::Threshold(t) => t.validate()?,
            _ => {}
        }
        let r = &self.run;
        if !(r.dt > 0.0 && r.action_interval >= r.dt && r.horizon >= r.action_interval) {
            return Err(Error::Config(
                "need 0 < dt <= action_interval <= horizon".into(),
            ));
        }
        let ratio = r.action_interval / r.dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(
                "action_interval must be a whole number of dt steps".into(),
            ));
        }
        if !(0.0..r.horizon).contains(&r.warmup) {
            return Err(Error::Config("warmup must lie in [0, horizon)".into()));
        }
        if r.eval_runs == 0 {
            return Err(Error::Config("eval_runs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&r.demand_spread) {
            return Err(Error::Config("demand_spread must lie in [0, 1)".into()));
        }

        let mut warnings = Vec::new();
        let mut check = |name: &str, v: f64, (lo, hi): (f64, f64)| {
            if !(lo..=hi).contains(&v) {
                warnings.push(format!(
                    "{name} = {v} is outside the studied range [{lo}, {hi}]"
                ));
            }
        };
        check("traffic.main_rate", self.traffic.main_rate, MAIN_RATE_RANGE);
        check("traffic.ramp_rate", self.traffic.ramp_rate, RAMP_RATE_RANGE);
        check(
            "geometry.accel_lane_length",
            self.geometry.accel_lane_length,
            ACCEL_LANE_RANGE,
        );
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            geometry: self.geometry.clone(),
            traffic: self.traffic.clone(),
            dynamics: self.dynamics.clone(),
            rsu: self.v2x,
            reward: self.mdp.reward,
            normalization: self.mdp.normalization,
            actions: self.mdp.actions.clone(),
            horizon: self.run.horizon,
            warmup: self.run.warmup,
            dt: self.run.dt,
            action_interval: self.run.action_interval,
            record_grid: false,
        }
    }
}
