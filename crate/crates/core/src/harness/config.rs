//! Run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::envsim::FRACTIONS;
use crate::error::{EclError, Result};
use crate::models::{ModelKind, ModelWidths, MotorTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Curriculum {
    EasyToHard,
    HardToEasy,
    Random,
}

/// Which parts of the motor stream joint shuffling swaps between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShuffleMode {
    /// Motor inputs and motor targets move together.
    #[default]
    Both,
    /// Only the motor targets are swapped; motor inputs stay veridical.
    Targets,
}

/// One training run. Every field except `id` has a default, so a config file
/// only needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub id: String,
    pub model: ModelKind,
    pub fraction: f64,
    pub curriculum: Curriculum,
    pub shuffle_joints: bool,
    pub shuffle_mode: ShuffleMode,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub widths: ModelWidths,
    pub dropout: f64,
    pub optimizer: AdamConfig,
    pub motor_target: MotorTarget,
    pub motor_ablation: bool,
    /// Dataset directory (used by `train --config`).
    pub dataset: PathBuf,
    /// Parent of the run directory; `ECL_OUT` takes precedence.
    pub output_root: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            id: "run".into(),
            model: ModelKind::Embodied,
            fraction: 1.0,
            curriculum: Curriculum::Random,
            shuffle_joints: false,
            shuffle_mode: ShuffleMode::Both,
            lambda: 1.0,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            widths: ModelWidths::default(),
            dropout: 0.3,
            optimizer: AdamConfig::default(),
            motor_target: MotorTarget::NextPose,
            motor_ablation: false,
            dataset: PathBuf::from("data"),
            output_root: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EclError::Config(format!("run {}: {m}", self.id)));
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return bad(format!("invalid run id {:?}", self.id));
        }
        if !FRACTIONS.iter().any(|(_, f)| (f - self.fraction).abs() < 1e-9) {
            return bad(format!("fraction must be 0.1, 0.5 or 1.0, got {}", self.fraction));
        }
        if self.shuffle_joints && self.model != ModelKind::Embodied {
            return bad("joint shuffling requires the embodied model".into());
        }
        if self.motor_ablation && self.model != ModelKind::Embodied {
            return bad("motor ablation requires the embodied model".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be finite and nonnegative, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.widths.channels.is_empty() || self.widths.classes != crate::models::NUM_CLASSES {
            return bad("widths need at least one conv block and 10 classes".into());
        }
        Ok(())
    }

    /// Whether the run logs a validation motor MSE.
    pub fn logs_motor(&self) -> bool {
        self.model == ModelKind::Embodied && self.lambda > 0.0
    }

    pub fn from_json(text: &str, what: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| EclError::json(what, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(EclError::MissingPath(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| EclError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }
}
