use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LeapConfig, Model, TrainConfig, TrainState};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: every layer carries explicit `rows`/`cols`, layers are
/// listed in forward order, and the initialization seed is recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub seed: u64,
    pub config: LeapConfig,
    pub train: TrainConfig,
    pub state: TrainState,
    pub model: Model,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}
