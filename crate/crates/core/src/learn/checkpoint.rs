use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnyPolicy, LearnError};
use crate::shaping::PreferenceProfile;

pub const CHECKPOINT_FORMAT: &str = "ssdnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing JSON snapshot of all agents' policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    /// Episodes completed.
    pub episode: u64,
    pub profile: Option<PreferenceProfile>,
    pub policies: Vec<AnyPolicy>,
}

impl Checkpoint {
    pub fn new(config_hash: &str, episode: u64, profile: Option<PreferenceProfile>, policies: Vec<AnyPolicy>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            episode,
            profile,
            policies,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        let json = serde_json::to_string(self).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Rejects checkpoints written under a different configuration.
    pub fn verify(&self, config_hash: &str) -> Result<(), LearnError> {
        if self.config_hash != config_hash {
            return Err(LearnError::Checkpoint(format!(
                "config hash mismatch: checkpoint {} vs run {config_hash}",
                self.config_hash
            )));
        }
        Ok(())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, LearnError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
    if value.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
        return Err(LearnError::Checkpoint(format!("{} is not a checkpoint file", path.display())));
    }
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(u64::from(CHECKPOINT_VERSION)) {
        return Err(LearnError::Checkpoint(format!("unsupported checkpoint version {version:?}")));
    }
    serde_json::from_value(value).map_err(|e| LearnError::Checkpoint(e.to_string()))
}
