//! JSON and JSON-lines files. Writers are deterministic: field order follows
//! the struct definitions and maps are ordered.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use hiaa_core::datapipe::{ScoredSample, TestFractions};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{read_error, write_error, CliError, Result};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| read_error(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| read_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| CliError::corrupt(path, format!("line {}: {e}", i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| write_error(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| CliError::corrupt(path, e))?;
        w.write_all(b"\n").map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::corrupt(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::corrupt(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| write_error(path, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| write_error(dir, e)),
        _ => Ok(()),
    }
}

/// Train/test assignment by sample id, with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub fractions: TestFractions,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitFile {
    pub fn new(seed: u64, fractions: TestFractions, train: &[ScoredSample], test: &[ScoredSample]) -> Self {
        let ids = |v: &[ScoredSample]| v.iter().map(|s| s.sample_id.clone()).collect();
        SplitFile { seed, fractions, train: ids(train), test: ids(test) }
    }

    /// Selects the samples listed in `ids`, in the order of `samples`.
    pub fn select(samples: &[ScoredSample], ids: &[String], path: &Path) -> Result<Vec<ScoredSample>> {
        let wanted: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        let out: Vec<ScoredSample> =
            samples.iter().filter(|s| wanted.contains(s.sample_id.as_str())).cloned().collect::<Vec<_>>();
        if out.len() != wanted.len() {
            return Err(CliError::corrupt(
                path,
                format!("{} split ids have no matching sample", wanted.len() - out.len()),
            ));
        }
        Ok(out)
    }
}
