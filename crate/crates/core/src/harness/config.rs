use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cvar::{CvarParams, Preset};
use crate::env::{PendulumConfig, RpbpConfig};
use crate::error::{invalid, Result};
use crate::linear::{TileCoder, TileCoderSpec};
use crate::tabular::StepSize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentConfig {
    Rpbp(RpbpConfig),
    Pendulum(PendulumConfig),
}

/// Value step size and the eta multipliers relative to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizeConfig {
    pub alpha: StepSize,
    /// Average-reward (CVaR for the CVaR presets) multiplier.
    #[serde(default = "one")]
    pub eta_r_bar: f64,
    #[serde(default = "one")]
    pub eta_var: f64,
    #[serde(default = "one")]
    pub eta_pi: f64,
}

fn one() -> f64 {
    1.0
}

/// Lists of values to cross; an empty list keeps the base config's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub alpha: Vec<StepSize>,
    pub eta_r_bar: Vec<f64>,
    pub eta_var: Vec<f64>,
    pub eta_pi: Vec<f64>,
    pub tau: Vec<f64>,
}

/// One experiment: environment, learner preset, hyperparameters and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub steps: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub initial_var: f64,
    #[serde(default)]
    pub initial_cvar: f64,
    /// Trailing window for rolling metrics and final summaries.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Keep every n-th step when writing series to CSV.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    pub step_sizes: StepSizeConfig,
    pub environment: EnvironmentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile_coding: Option<TileCoderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_tau() -> f64 {
    0.25
}

fn default_window() -> usize {
    1000
}

fn default_record_every() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seed list is empty"));
        }
        if self.window == 0 || self.window > self.steps {
            return Err(invalid(format!(
                "window must lie in [1, steps = {}], got {}",
                self.steps, self.window
            )));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(invalid(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        self.cvar_params().validate()?;
        let s = &self.step_sizes;
        if [s.eta_r_bar, s.eta_var, s.eta_pi].iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(invalid("eta multipliers must be positive"));
        }
        match (&self.environment, self.preset.is_tabular()) {
            (EnvironmentConfig::Rpbp(c), true) => c.validate()?,
            (EnvironmentConfig::Pendulum(c), false) => {
                c.validate()?;
                self.tile_coder()?;
            }
            _ => {
                return Err(invalid(format!(
                    "preset {} does not run on this environment (tabular presets need rpbp, actor-critic presets need pendulum)",
                    self.preset
                )))
            }
        }
        if let Some(grid) = &self.sweep {
            self.validate_grid(grid)?;
        }
        Ok(())
    }

    fn validate_grid(&self, grid: &SweepGrid) -> Result<()> {
        let cvar = self.preset.is_cvar();
        let ac = !self.preset.is_tabular();
        if !cvar && !grid.eta_var.is_empty() {
            return Err(invalid(format!("preset {} has no VaR step size to sweep", self.preset)));
        }
        if !cvar && !grid.tau.is_empty() {
            return Err(invalid(format!("preset {} has no tau to sweep", self.preset)));
        }
        if !ac && !grid.eta_pi.is_empty() {
            return Err(invalid(format!("preset {} has no policy step size to sweep", self.preset)));
        }
        if grid
            .eta_r_bar
            .iter()
            .chain(&grid.eta_var)
            .chain(&grid.eta_pi)
            .any(|e| !(e.is_finite() && *e > 0.0))
        {
            return Err(invalid("swept eta multipliers must be positive"));
        }
        if grid.tau.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(invalid("swept tau values must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn cvar_params(&self) -> CvarParams {
        CvarParams {
            tau: self.tau,
            initial_var: self.initial_var,
            initial_cvar: self.initial_cvar,
        }
    }

    /// Configured coder, or 32 tilings of 8x8 over the pendulum state box.
    pub fn tile_coder(&self) -> Result<TileCoder> {
        match &self.tile_coding {
            Some(spec) => TileCoder::try_from(spec.clone()),
            None => Ok(TileCoder::pendulum()),
        }
    }
}
