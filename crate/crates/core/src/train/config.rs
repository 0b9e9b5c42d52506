//! Training hyper-parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stabiliser in the inverse-increment weight `1 / (|du| + eps)`.
pub const NOISE_EPS: f64 = 1e-8;

/// How displacement-increment inputs are perturbed during teacher forcing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Inputs pass through untouched.
    #[default]
    None,
    /// Every node receives Gaussian noise of the same scale.
    Uniform,
    /// Noise scaled per node by the normalised inverse increment magnitude,
    /// so nearly static nodes receive the largest perturbation.
    Adaptive,
}

impl NoiseMode {
    pub const ALL: [NoiseMode; 3] = [NoiseMode::None, NoiseMode::Uniform, NoiseMode::Adaptive];

    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::None => "none",
            NoiseMode::Uniform => "uniform",
            NoiseMode::Adaptive => "adaptive",
        }
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseMode::None),
            "uniform" => Ok(NoiseMode::Uniform),
            "adaptive" => Ok(NoiseMode::Adaptive),
            other => Err(Error::Parameter(format!(
                "unknown noise mode `{other}` (expected none|uniform|adaptive)"
            ))),
        }
    }
}

impl std::fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings of one training run.
///
/// The learning rate decays geometrically from `lr_start` to `lr_end` over
/// the configured epochs; each optimiser step consumes a single graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub noise: NoiseMode,
    /// Dimensionless noise amplitude multiplying the per-sample increment
    /// standard deviation.
    pub lambda_noise: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            noise: NoiseMode::None,
            lambda_noise: 0.02,
            lr_start: 1e-4,
            lr_end: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".to_string()));
        }
        if !(self.lambda_noise >= 0.0) {
            return Err(Error::Parameter(format!(
                "lambda_noise must be non-negative, got {}",
                self.lambda_noise
            )));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(Error::Parameter(format!(
                "learning rates must be positive, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        Ok(())
    }
}
