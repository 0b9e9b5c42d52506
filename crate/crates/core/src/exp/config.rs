//! Experiment configuration: one JSON document drives dataset generation,
//! training, and evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::DEFAULT_TAU;
use crate::fe::{build_blank_mesh, BlankMesh, Material, OpenPlate, Punch, ToolSet};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// Blank discretisation and geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    /// Side length of the square blank, mm.
    pub side: f64,
    /// Initial sheet thickness, mm.
    pub thickness: f64,
    /// Width of the fully clamped rim band, mm.
    pub clamp_band: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { nx: 17, ny: 17, side: 100.0, thickness: 2.0, clamp_band: 10.0 }
    }
}

impl MeshConfig {
    pub fn build(&self) -> Result<BlankMesh> {
        build_blank_mesh(self.nx, self.ny, self.side, self.thickness, self.clamp_band)
    }
}

/// Cases per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts { train: 12, val: 4, test: 6 }
    }
}

/// Fixed tooling shared by every case; the punch radius and stroke are the
/// two sampled process parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolConfig {
    /// Common vertical axis of punch, die, and holder (x, y), mm.
    pub center_xy: [f64; 2],
    pub die_throat_radius: f64,
    pub die_fillet_radius: f64,
    pub holder_throat_radius: f64,
    pub holder_fillet_radius: f64,
    pub penalty_stiffness: f64,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            center_xy: [50.0, 50.0],
            die_throat_radius: 30.0,
            die_fillet_radius: 5.0,
            holder_throat_radius: 32.0,
            holder_fillet_radius: 4.0,
            penalty_stiffness: 2.0e5,
        }
    }
}

impl ToolConfig {
    /// Instantiates the tool set of one case. The punch starts with its
    /// lowest point resting on the blank plane and descends by `stroke`.
    pub fn build(&self, punch_radius: f64, stroke: f64) -> ToolSet {
        ToolSet {
            punch: Punch {
                center_xy: self.center_xy,
                start_z: punch_radius,
                radius: punch_radius,
                stroke,
            },
            die: OpenPlate {
                axis_xy: self.center_xy,
                plane_z: 0.0,
                throat_radius: self.die_throat_radius,
                fillet_radius: self.die_fillet_radius,
                facing_up: true,
            },
            holder: OpenPlate {
                axis_xy: self.center_xy,
                plane_z: 0.0,
                throat_radius: self.holder_throat_radius,
                fillet_radius: self.holder_fillet_radius,
                facing_up: false,
            },
            penalty_stiffness: self.penalty_stiffness,
        }
    }
}

/// Dataset-generation settings: mesh, material, tooling, sample counts,
/// and the sampled parameter ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub mesh: MeshConfig,
    pub material: Material,
    pub tools: ToolConfig,
    pub num_cases: SplitCounts,
    /// Sampled punch radius range `[lo, hi]`, mm.
    pub punch_radius: [f64; 2],
    /// Sampled punch stroke range `[lo, hi]`, mm.
    pub punch_stroke: [f64; 2],
    /// Process duration handed to the explicit solver.
    pub total_time: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            mesh: MeshConfig::default(),
            material: Material::default(),
            tools: ToolConfig::default(),
            num_cases: SplitCounts::default(),
            punch_radius: [20.0, 28.0],
            punch_stroke: [8.0, 18.0],
            total_time: 1.0,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        for (name, [lo, hi]) in
            [("punch_radius", self.punch_radius), ("punch_stroke", self.punch_stroke)]
        {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo > 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} range [{lo}, {hi}] must be positive and ordered"
                )));
            }
        }
        if self.total_time <= 0.0 {
            return Err(Error::Parameter(format!(
                "total_time must be positive, got {}",
                self.total_time
            )));
        }
        self.mesh.build().map(|_| ())
    }
}

/// Rollout evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Thinning threshold selecting the evaluated element subset.
    pub tau: f64,
    /// Percentile (0-100] of worst thinning used by the top-p metrics.
    pub p: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { tau: DEFAULT_TAU, p: 5.0 }
    }
}

/// The complete experiment description. Unknown JSON keys are rejected in
/// every section; omitted keys take the documented defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(self.eval.p > 0.0 && self.eval.p <= 100.0) {
            return Err(Error::Parameter(format!(
                "eval percentile must lie in (0, 100], got {}",
                self.eval.p
            )));
        }
        if !(self.eval.tau.is_finite() && self.eval.tau >= 0.0) {
            return Err(Error::Parameter(format!(
                "thinning threshold must be non-negative, got {}",
                self.eval.tau
            )));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<ExperimentConfig> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }
}

/// Preset scale of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Minutes-scale end-to-end check: coarse mesh, narrow network, few
    /// epochs.
    Smoke,
    /// Full desk-scale study with the default architecture.
    Full,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Smoke => "smoke",
            Profile::Full => "full",
        }
    }

    /// Rewrites the scale-dependent fields of `config` in place.
    pub fn apply(&self, config: &mut ExperimentConfig) {
        match self {
            Profile::Smoke => {
                config.dataset.mesh.nx = 9;
                config.dataset.mesh.ny = 9;
                config.model.hidden = 32;
                config.model.layers = 8;
                if let Some(h) = config.model.hierarchy.as_mut() {
                    h.fine_layers = 2;
                    h.coarse_layers = 6;
                }
                config.train.epochs = 30;
            }
            Profile::Full => {}
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Profile::Smoke),
            "full" => Ok(Profile::Full),
            other => Err(Error::Parameter(format!("unknown profile `{other}`"))),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
