use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::trainer::Trainer;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::Tensor;
use crate::optim::Optimizer;
use crate::rng::{seeded, RngState};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Complete training state as one JSON document. Floats are written in
/// shortest round-trip form, so save then load is bitwise exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    pub epoch: usize,
    pub steps: usize,
    pub params: BTreeMap<String, Tensor>,
    pub optimizer: Optimizer,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn capture(config: &RunConfig, trainer: &Trainer) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            epoch: trainer.epoch,
            steps: trainer.steps,
            params: trainer.params.named(),
            optimizer: trainer.optimizer.clone(),
            rng: RngState::capture(&trainer.rng),
        }
    }

    /// Rebuild the trainer exactly as it was captured.
    pub fn restore(&self) -> Result<Trainer> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Compatibility(format!(
                "checkpoint version {} is not {CHECKPOINT_VERSION}",
                self.version
            )));
        }
        self.config.validate()?;
        let (model, mut params) = Model::new(self.config.model.clone(), &mut seeded(0))?;
        params.load_named(&self.params)?;
        self.optimizer.check_compatible(&params)?;
        Ok(Trainer {
            model,
            params,
            optimizer: self.optimizer.clone(),
            rng: self.rng.restore()?,
            loss_weights: self.config.loss_weights,
            epoch: self.epoch,
            steps: self.steps,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            line: e.inner().line(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::error::write_file(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&crate::error::read_text(path)?)
    }
}
