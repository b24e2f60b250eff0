use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_override, RunConfig};
use crate::error::Result;
use crate::pipeline::{self, Subset};

#[derive(Debug, Parser)]
#[command(name = "hiaa", version, about = "Hierarchical human-image aesthetic scoring pipeline")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (`seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (`out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set stage1.epochs=3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_override)]
    pub set: Vec<(String, String)>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotation corpus.
    Synth(SynthArgs),
    /// Normalize and aggregate annotation records into scored samples.
    Ingest,
    /// Render question-answer pairs for every sample.
    Genqa,
    /// Split samples into train and test sets per source.
    Split(SplitArgs),
    /// Stage 1: joint training of backbone and heads.
    Train(TrainArgs),
    /// Stage 2: train the fusion network on frozen head scores.
    TrainVoter(VoterArgs),
    /// Score samples with every head.
    Score(ScoreArgs),
    /// Evaluate every head on the test split.
    Eval,
    /// Print the stored evaluation as a table.
    Report,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of records (`synth.n`).
    #[arg(long)]
    pub n: Option<usize>,
    /// Leaf observation noise (`synth.noise_sigma`).
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Fraction of overall-only records (`synth.overall_fraction`).
    #[arg(long)]
    pub overall_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Held-out fraction for every source (`split.default`).
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `stage1.epochs`
    #[arg(long)]
    pub epochs: Option<usize>,
    /// `stage1.learning_rate`
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// `stage1.batch_size`
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `stage1.lambda`
    #[arg(long)]
    pub lambda: Option<f64>,
    /// `stage1.mu`
    #[arg(long)]
    pub mu: Option<f64>,
    /// `stage1.optimizer` (sgd or adam)
    #[arg(long)]
    pub optimizer: Option<String>,
}

#[derive(Debug, Args)]
pub struct VoterArgs {
    /// `voter.epochs`
    #[arg(long)]
    pub epochs: Option<usize>,
    /// `voter.learning_rate`
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// `voter.batch_size`
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Also emit the fused score; requires a trained fusion network.
    #[arg(long)]
    pub fused: bool,
    #[arg(long, value_enum, default_value = "all")]
    pub subset: Subset,
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key.into(), v.to_string()));
    }
}

impl Cli {
    /// Flags as config overrides, applied after `--set`.
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut o = self.set.clone();
        push(&mut o, "seed", &self.seed);
        if let Some(out) = &self.out {
            o.push(("out".into(), toml_string(&out.to_string_lossy())));
        }
        match &self.command {
            Command::Synth(a) => {
                push(&mut o, "synth.n", &a.n);
                push(&mut o, "synth.noise_sigma", &a.noise_sigma);
                push(&mut o, "synth.overall_fraction", &a.overall_fraction);
            }
            Command::Split(a) => push(&mut o, "split.default", &a.test_fraction),
            Command::Train(a) => {
                push(&mut o, "stage1.epochs", &a.epochs);
                push(&mut o, "stage1.learning_rate", &a.learning_rate.map(float));
                push(&mut o, "stage1.batch_size", &a.batch_size);
                push(&mut o, "stage1.lambda", &a.lambda.map(float));
                push(&mut o, "stage1.mu", &a.mu.map(float));
                push(&mut o, "stage1.optimizer", &a.optimizer.as_deref().map(toml_string));
            }
            Command::TrainVoter(a) => {
                push(&mut o, "voter.epochs", &a.epochs);
                push(&mut o, "voter.learning_rate", &a.learning_rate.map(float));
                push(&mut o, "voter.batch_size", &a.batch_size);
            }
            _ => {}
        }
        o
    }
}

/// A float literal TOML will not read back as an integer.
fn float(v: f64) -> String {
    format!("{v:?}")
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.into()).to_string()
}

pub fn run(cli: &Cli) -> Result<String> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides())?;
    match &cli.command {
        Command::Synth(_) => pipeline::synth(&cfg),
        Command::Ingest => pipeline::ingest(&cfg),
        Command::Genqa => pipeline::genqa(&cfg),
        Command::Split(_) => pipeline::split(&cfg),
        Command::Train(_) => pipeline::train(&cfg),
        Command::TrainVoter(_) => pipeline::train_voter(&cfg),
        Command::Score(a) => pipeline::score(&cfg, a.fused, a.subset),
        Command::Eval => pipeline::eval(&cfg),
        Command::Report => pipeline::report(&cfg),
    }
}
