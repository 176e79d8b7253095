use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LossWeights, ModelConfig};
use crate::optim::{OptimizerConfig, OptimizerKind};

/// Learning rates swept by `--lr-grid`.
pub const LR_GRID: [f64; 3] = [1e-4, 5e-4, 1e-3];
pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;

/// Named training regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Batch 1, 500 epochs, one decoder layer.
    TvsumLike,
    /// Batch 32, 200 epochs, three decoder layers.
    QvhLike,
}

impl Preset {
    pub fn batch_size(self) -> usize {
        match self {
            Preset::TvsumLike => 1,
            Preset::QvhLike => 32,
        }
    }

    pub fn epochs(self) -> usize {
        match self {
            Preset::TvsumLike => 500,
            Preset::QvhLike => 200,
        }
    }

    pub fn decoder_layers(self) -> usize {
        match self {
            Preset::TvsumLike => 1,
            Preset::QvhLike => 3,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tvsum-like" => Ok(Preset::TvsumLike),
            "qvh-like" => Ok(Preset::QvhLike),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}, expected tvsum-like or qvh-like"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::TvsumLike => "tvsum-like",
            Preset::QvhLike => "qvh-like",
        })
    }
}

/// Everything that determines a training run. Serialized in full, defaults
/// included, so a saved copy reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// JSONL dataset; split 80/20 into train and validation by id hash.
    pub dataset: Option<PathBuf>,
    pub model: ModelConfig,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    pub loss_weights: LossWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            dataset: None,
            model: ModelConfig::default(),
            optimizer: OptimizerKind::Lion,
            lr: DEFAULT_LR,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            batch_size: 1,
            epochs: 1,
            max_steps: None,
            seed: 0,
            out: PathBuf::from("runs/default"),
            loss_weights: LossWeights::default(),
        };
        cfg.apply_preset(Preset::TvsumLike);
        cfg
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self::default();
        cfg.apply_preset(preset);
        cfg
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        self.batch_size = preset.batch_size();
        self.epochs = preset.epochs();
        self.model.decoder_layers = preset.decoder_layers();
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig::new(self.optimizer, self.lr, self.weight_decay)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be >= 1 when set".into()));
        }
        let w = &self.loss_weights;
        if [w.l1, w.iou, w.cls, w.saliency].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }
}
