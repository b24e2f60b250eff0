//! Versioned JSON checkpoints. Parameters are written as shortest
//! round-trip decimal literals and parsed with correct rounding, so a save and
//! load reproduces every 64-bit value exactly.

use std::fs;
use std::path::Path;

use hiaa_core::trainer::{ModelCheckpoint, CHECKPOINT_FORMAT_VERSION};

use crate::error::{read_error, CliError, Result};
use crate::io::write_text;

pub fn to_json(ckpt: &ModelCheckpoint) -> serde_json::Result<String> {
    let mut text = serde_json::to_string_pretty(ckpt)?;
    text.push('\n');
    Ok(text)
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    let text = to_json(ckpt).map_err(|e| CliError::corrupt(path, e))?;
    write_text(path, &text)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let text = fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    parse_checkpoint(&text, path)
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<ModelCheckpoint> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::corrupt(path, e))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| CliError::corrupt(path, "missing or invalid format_version"))?;
    if version != u64::from(CHECKPOINT_FORMAT_VERSION) {
        return Err(CliError::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let ckpt: ModelCheckpoint = serde_json::from_value(value).map_err(|e| CliError::corrupt(path, e))?;
    ckpt.model.backbone.check_shapes().map_err(|e| CliError::corrupt(path, e))?;
    if ckpt.model.dims() != ckpt.config.dims {
        return Err(CliError::corrupt(path, "parameter shapes disagree with the recorded model sizes"));
    }
    Ok(ckpt)
}
