//! Versioned JSON run configurations shared by the command line and the
//! service.

use serde::{Deserialize, Serialize};

use crate::calibration::{AitConfig, NullEstimate};
use crate::error::{Error, Result};
use crate::objective::{default_w_grid, DesignProblem, PolicyFamily};
use crate::power::{Calibration, PriorSpec};
use crate::sim::{Policy, RewardKernel, RunMode};
use crate::stats::TestSpec;

/// Schema version this build reads and writes.
pub const CONFIG_VERSION: u32 = 1;

fn check_version(v: u32) -> Result<()> {
    if v != CONFIG_VERSION {
        return Err(Error::config(
            "version",
            format!("unsupported version {v}, expected {CONFIG_VERSION}"),
        ));
    }
    Ok(())
}

fn default_grid_points() -> usize {
    10
}

fn default_alpha() -> f64 {
    0.05
}

fn default_beta() -> f64 {
    0.2
}

/// A design-optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Master seed. Required: runs are never seeded from the clock.
    pub seed: u64,
    /// Number of arms K.
    pub arms: usize,
    pub prior: PriorSpec,
    pub test: TestSpec,
    pub policy_family: PolicyFamily,
    pub phis: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta_target: f64,
    pub w: f64,
    /// Costs for relative-score curves; 50 log-spaced points on
    /// `[1e-4, 1]` when absent.
    #[serde(default)]
    pub w_grid: Option<Vec<f64>>,
    pub t_max: u64,
    pub replications: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub null_replications: Option<usize>,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub calibration: Calibration,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.arms < 2 {
            return Err(Error::config("arms", "K must be ≥ 2"));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::config("w", "must be a finite value ≥ 0"));
        }
        if let Some(grid) = &self.w_grid {
            if grid.is_empty() || grid.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::config("w_grid", "must hold finite values ≥ 0"));
            }
        }
        for &phi in &self.phis {
            if !(0.0..=1.0).contains(&phi) {
                return Err(Error::config("phis", "values must lie in [0, 1]"));
            }
        }
        self.problem().validate()
    }

    pub fn problem(&self) -> DesignProblem {
        DesignProblem {
            k: self.arms,
            prior: self.prior.clone(),
            spec: self.test.clone(),
            family: self.policy_family,
            phis: self.phis.clone(),
            alpha: self.alpha,
            beta_target: self.beta_target,
            t_max: self.t_max,
            replications: self.replications,
            grid_points: self.grid_points,
            null_replications: self.null_replications,
            mode: self.mode,
            calibration: self.calibration,
        }
    }

    pub fn w_grid(&self) -> Vec<f64> {
        self.w_grid.clone().unwrap_or_else(default_w_grid)
    }
}

/// A single AIT calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub version: u32,
    pub seed: u64,
    pub arms: usize,
    pub horizon: u64,
    pub policy: Policy,
    /// Common reward distribution of every arm under the null.
    pub null: RewardKernel,
    pub test: TestSpec,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub replications: usize,
    #[serde(default)]
    pub mode: RunMode,
}

impl CalibrationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: CalibrationConfig =
            serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        self.null.validate()?;
        self.ait().validate()
    }

    pub fn ait(&self) -> AitConfig {
        AitConfig {
            k: self.arms,
            horizon: self.horizon,
            policy: self.policy,
            spec: self.test.clone(),
            alpha: self.alpha,
            replications: self.replications,
            mode: self.mode,
        }
    }

    pub fn null_estimate(&self) -> NullEstimate {
        NullEstimate::from_kernel(self.null)
    }
}
