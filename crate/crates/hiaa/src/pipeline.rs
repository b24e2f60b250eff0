//! One function per command. Each reads its inputs, writes its outputs and
//! returns a one-line summary.

use std::path::Path;

use hiaa_core::backbone::derive_features;
use hiaa_core::datapipe::{self, AnnotationRecord, QaPair, ScoredSample};
use hiaa_core::metavoter::train_metavoter;
use hiaa_core::metrics::{evaluate, HeadKind};
use hiaa_core::model::{score_sample, HeadScores, ModelParams};
use hiaa_core::synth;
use hiaa_core::trainer::{train_stage1, ModelCheckpoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{read_json, read_jsonl, write_json, write_jsonl, write_text, SplitFile};
use crate::report::{render_bundle, EvalBundle};

/// Which samples `score` covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subset {
    All,
    Train,
    Test,
}

pub fn synth(cfg: &RunConfig) -> Result<String> {
    let records: Vec<AnnotationRecord> = synth::generate(&cfg.synth_config())?.into_iter().map(|r| r.record).collect();
    let path = cfg.path(&cfg.paths.records);
    write_jsonl(&path, &records)?;
    Ok(format!("wrote {} records to {}", records.len(), path.display()))
}

pub fn ingest(cfg: &RunConfig) -> Result<String> {
    let records: Vec<AnnotationRecord> = read_jsonl(&cfg.path(&cfg.paths.records))?;
    let samples = datapipe::build_samples(&records)?;
    let path = cfg.path(&cfg.paths.samples);
    write_jsonl(&path, &samples)?;
    Ok(format!("wrote {} samples to {}", samples.len(), path.display()))
}

pub fn genqa(cfg: &RunConfig) -> Result<String> {
    let samples = read_samples(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds().genqa);
    let qa = samples
        .iter()
        .map(|s| {
            let idx = rng.random_range(0..datapipe::paraphrases(s.f).len());
            datapipe::make_qa(s, idx)
        })
        .collect::<hiaa_core::Result<Vec<QaPair>>>()?;
    let path = cfg.path(&cfg.paths.qa);
    write_jsonl(&path, &qa)?;
    Ok(format!("wrote {} question-answer pairs to {}", qa.len(), path.display()))
}

pub fn split(cfg: &RunConfig) -> Result<String> {
    let samples = read_samples(cfg)?;
    let seed = cfg.seeds().split;
    let (train, test) = datapipe::split_dataset(samples, &cfg.split, seed)?;
    let file = SplitFile::new(seed, cfg.split.clone(), &train, &test);
    let path = cfg.path(&cfg.paths.split);
    write_json(&path, &file)?;
    Ok(format!("split {} train / {} test into {}", train.len(), test.len(), path.display()))
}

pub fn train(cfg: &RunConfig) -> Result<String> {
    let (train, _) = read_split(cfg)?;
    let mut ckpt = train_stage1(&train, &cfg.stage1_config())?;
    ckpt.provenance = cfg.provenance("train");
    let path = cfg.path(&cfg.paths.stage1_checkpoint);
    save_checkpoint(&ckpt, &path)?;
    Ok(format!("trained stage 1 on {} samples, wrote {}", train.len(), path.display()))
}

pub fn train_voter(cfg: &RunConfig) -> Result<String> {
    let stage1_path = cfg.path(&cfg.paths.stage1_checkpoint);
    let mut ckpt = load_checkpoint(&stage1_path)?;
    let (train, _) = read_split(cfg)?;
    let scores = score_all(&ckpt.model, &train)?;
    let inputs: Vec<[f64; 3]> = scores.iter().map(HeadScores::voter_input).collect();
    let targets: Vec<f64> = train.iter().map(ScoredSample::overall).collect();
    ckpt.metavoter = Some(train_metavoter(&inputs, &targets, &cfg.voter_config())?);
    ckpt.provenance = cfg.provenance("train-voter");
    let path = cfg.path(&cfg.paths.checkpoint);
    save_checkpoint(&ckpt, &path)?;
    Ok(format!("trained the fusion network on {} samples, wrote {}", train.len(), path.display()))
}

pub fn score(cfg: &RunConfig, fused: bool, subset: Subset) -> Result<String> {
    let ckpt_path = cfg.path(&cfg.paths.checkpoint);
    let ckpt = load_checkpoint(&ckpt_path)?;
    if fused && ckpt.metavoter.is_none() {
        return Err(untrained_voter(&ckpt_path));
    }
    let samples = match subset {
        Subset::All => read_samples(cfg)?,
        Subset::Train => read_split(cfg)?.0,
        Subset::Test => read_split(cfg)?.1,
    };
    let mut scores = score_all(&ckpt.model, &samples)?;
    if fused {
        fuse(&ckpt, &mut scores)?;
    }
    let path = cfg.path(&cfg.paths.scores);
    write_jsonl(&path, &scores)?;
    Ok(format!("scored {} samples into {}", scores.len(), path.display()))
}

pub fn eval(cfg: &RunConfig) -> Result<String> {
    let ckpt_path = cfg.path(&cfg.paths.checkpoint);
    let ckpt = load_checkpoint(&ckpt_path)?;
    if ckpt.metavoter.is_none() {
        return Err(untrained_voter(&ckpt_path));
    }
    let (_, test) = read_split(cfg)?;
    let mut scores = score_all(&ckpt.model, &test)?;
    fuse(&ckpt, &mut scores)?;
    let provenance = cfg.provenance("eval");
    let reports = HeadKind::ALL
        .iter()
        .map(|&head| {
            let mut r = evaluate(&test, &scores, head)?;
            r.provenance = provenance.clone();
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let bundle = EvalBundle { provenance, reports };
    let json_path = cfg.path(&cfg.paths.report_json);
    write_json(&json_path, &bundle)?;
    write_text(&cfg.path(&cfg.paths.report_text), &render_bundle(&bundle))?;
    let summary: Vec<String> = bundle
        .reports
        .iter()
        .map(|r| match r.overall().plcc {
            Some(p) => format!("{} {p:.4}", r.head.as_str()),
            None => format!("{} undef", r.head.as_str()),
        })
        .collect();
    Ok(format!(
        "evaluated {} test samples, overall plcc: {}; wrote {}",
        test.len(),
        summary.join(", "),
        json_path.display()
    ))
}

/// Renders the stored evaluation as a table.
pub fn report(cfg: &RunConfig) -> Result<String> {
    let bundle: EvalBundle = read_json(&cfg.path(&cfg.paths.report_json))?;
    Ok(render_bundle(&bundle))
}

fn untrained_voter(path: &Path) -> CliError {
    CliError::missing(path, "checkpoint has no trained fusion network; run train-voter first")
}

fn read_samples(cfg: &RunConfig) -> Result<Vec<ScoredSample>> {
    let path = cfg.path(&cfg.paths.samples);
    let samples: Vec<ScoredSample> = read_jsonl(&path)?;
    for s in &samples {
        s.validate().map_err(|e| CliError::corrupt(&path, e))?;
    }
    Ok(samples)
}

fn read_split(cfg: &RunConfig) -> Result<(Vec<ScoredSample>, Vec<ScoredSample>)> {
    let samples = read_samples(cfg)?;
    let path = cfg.path(&cfg.paths.split);
    let split: SplitFile = read_json(&path)?;
    Ok((SplitFile::select(&samples, &split.train, &path)?, SplitFile::select(&samples, &split.test, &path)?))
}

pub fn score_all(params: &ModelParams, samples: &[ScoredSample]) -> Result<Vec<HeadScores>> {
    let dim = params.dims().feature_dim;
    samples
        .iter()
        .map(|s| Ok(score_sample(params, &s.sample_id, &derive_features(s.feature_seed, dim), s.f)?))
        .collect()
}

fn fuse(ckpt: &ModelCheckpoint, scores: &mut [HeadScores]) -> Result<()> {
    let voter = ckpt.metavoter.as_ref().expect("checked by caller");
    for s in scores {
        s.fused = Some(voter.forward_eval(s.voter_input())?);
    }
    Ok(())
}
