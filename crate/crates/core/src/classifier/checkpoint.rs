//! Versioned model checkpoints.
//!
//! The checkpoint is a JSON document holding every parameter tensor, the
//! batch-norm running statistics, and a hash of the configuration that
//! produced the model. `f64` values are written in shortest round-trip
//! form, so load(save(model)) reproduces the model bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Classifier;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    /// FNV-1a hash of the canonical configuration JSON, hex-encoded.
    config_hash: String,
    model: Classifier,
}

pub fn save_checkpoint(model: &Classifier, config_hash: u64, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        config_hash: format!("{config_hash:016x}"),
        model: model.clone(),
    };
    let body = serde_json::to_string_pretty(&file)?;
    crate::report::write_atomic(path, body.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<(Classifier, u64)> {
    let body = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&body)?;
    if file.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: file.schema_version,
            supported: CHECKPOINT_SCHEMA_VERSION,
        });
    }
    let hash = u64::from_str_radix(&file.config_hash, 16)
        .map_err(|e| Error::Data(format!("invalid config hash in checkpoint: {e}")))?;
    Ok((file.model, hash))
}
