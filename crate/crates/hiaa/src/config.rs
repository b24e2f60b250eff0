//! Run configuration: one TOML document covering every stage, a master seed
//! from which all stage seeds derive, and dotted-key overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hiaa_core::datapipe::TestFractions;
use hiaa_core::metavoter::VoterConfig;
use hiaa_core::model::ModelDims;
use hiaa_core::optim::OptimizerKind;
use hiaa_core::synth::SynthConfig;
use hiaa_core::trainer::Stage1Config;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    /// Directory that relative paths resolve against.
    pub out: PathBuf,
    pub paths: Paths,
    pub model: ModelDims,
    pub synth: SynthSection,
    pub split: TestFractions,
    pub stage1: Stage1Section,
    pub voter: VoterSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("run"),
            paths: Paths::default(),
            model: ModelDims::default(),
            synth: SynthSection::default(),
            split: TestFractions::default(),
            stage1: Stage1Section::default(),
            voter: VoterSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub records: PathBuf,
    pub samples: PathBuf,
    pub qa: PathBuf,
    pub split: PathBuf,
    /// Stage-1 output: backbone and heads, no fusion network.
    pub stage1_checkpoint: PathBuf,
    /// Stage-2 output: the stage-1 model plus the trained fusion network.
    pub checkpoint: PathBuf,
    pub scores: PathBuf,
    pub report_json: PathBuf,
    pub report_text: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            records: "records.jsonl".into(),
            samples: "samples.jsonl".into(),
            qa: "qa.jsonl".into(),
            split: "split.json".into(),
            stage1_checkpoint: "stage1.json".into(),
            checkpoint: "model.json".into(),
            scores: "scores.jsonl".into(),
            report_json: "report.json".into(),
            report_text: "report.txt".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n: usize,
    pub noise_sigma: f64,
    pub overall_fraction: f64,
    pub raters: usize,
    pub rater_sigma: f64,
    pub gain: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            n: d.n,
            noise_sigma: d.noise_sigma,
            overall_fraction: d.overall_fraction,
            raters: d.raters,
            rater_sigma: d.rater_sigma,
            gain: d.gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Section {
    pub lambda: f64,
    pub mu: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
}

impl Default for Stage1Section {
    fn default() -> Self {
        let d = Stage1Config::default();
        Stage1Section {
            lambda: d.lambda,
            mu: d.mu,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            optimizer: d.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoterSection {
    pub width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub eps: f64,
}

impl Default for VoterSection {
    fn default() -> Self {
        let d = VoterConfig::default();
        VoterSection {
            width: d.width,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            optimizer: d.optimizer,
            momentum: d.momentum,
            eps: d.eps,
        }
    }
}

/// Stage seeds at fixed offsets from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub synth: u64,
    pub split: u64,
    pub stage1: u64,
    pub voter: u64,
    pub genqa: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Seeds {
            synth: master,
            split: master.wrapping_add(1),
            stage1: master.wrapping_add(2),
            voter: master.wrapping_add(3),
            genqa: master.wrapping_add(4),
        }
    }
}

impl RunConfig {
    /// Reads `path` (defaults when absent) and applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {}", p.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            set_dotted(&mut table, key, parse_value(raw))?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.stage1_config().validate()?;
        self.split.validate()?;
        let v = self.voter_config();
        if v.width == 0 || v.epochs == 0 || v.batch_size < 2 {
            return Err(CliError::Config("voter width and epochs must be positive and batch_size >= 2".into()));
        }
        if !(v.learning_rate >= 0.0 && v.learning_rate.is_finite()) {
            return Err(CliError::Config("voter learning_rate must be a finite non-negative number".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_master(self.seed)
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            n: s.n,
            seed: self.seeds().synth,
            noise_sigma: s.noise_sigma,
            overall_fraction: s.overall_fraction,
            feature_dim: self.model.feature_dim,
            raters: s.raters,
            rater_sigma: s.rater_sigma,
            gain: s.gain,
        }
    }

    pub fn stage1_config(&self) -> Stage1Config {
        let s = &self.stage1;
        Stage1Config {
            lambda: s.lambda,
            mu: s.mu,
            learning_rate: s.learning_rate,
            batch_size: s.batch_size,
            epochs: s.epochs,
            seed: self.seeds().stage1,
            optimizer: s.optimizer,
            dims: self.model,
        }
    }

    pub fn voter_config(&self) -> VoterConfig {
        let v = &self.voter;
        VoterConfig {
            width: v.width,
            epochs: v.epochs,
            learning_rate: v.learning_rate,
            batch_size: v.batch_size,
            seed: self.seeds().voter,
            optimizer: v.optimizer,
            momentum: v.momentum,
            eps: v.eps,
        }
    }

    /// Resolved settings as dotted keys, for echoing into artifacts. The output
    /// directory is a location rather than a setting and is left out so that
    /// identical runs in different directories yield identical artifacts.
    pub fn provenance(&self, command: &str) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let value = toml::Value::try_from(self).expect("config serializes");
        flatten("", &value, &mut out);
        out.remove("out");
        let s = self.seeds();
        for (name, seed) in
            [("synth", s.synth), ("split", s.split), ("stage1", s.stage1), ("voter", s.voter), ("genqa", s.genqa)]
        {
            out.insert(format!("seeds.{name}"), seed.to_string());
        }
        out.insert("command".into(), command.into());
        out
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        toml::Value::String(s) => {
            out.insert(prefix.into(), s.clone());
        }
        other => {
            out.insert(prefix.into(), other.to_string());
        }
    }
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.into()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Config(format!("bad key `{key}`")))?;
    let mut cur = table;
    for part in parts {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Splits a `key=value` override.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}
