//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so every line is printed; exits non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use hiaa::pipeline::score_all;
use hiaa_core::datapipe::{build_samples, AnnotationType, ScoredSample};
use hiaa_core::heads::lm_score;
use hiaa_core::metavoter::{mae_loss, train_metavoter, VoterConfig};
use hiaa_core::metrics::{evaluate, pearson, HeadKind};
use hiaa_core::model::{HeadScores, ModelParams, Parameters};
use hiaa_core::synth::{generate, SynthConfig};
use hiaa_core::trainer::{self, train_stage1, Stage1Config};
use hiaa_core::{Dimension, RatingLevel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// Pinned tolerances and budgets.
const ORACLE_TOL: f64 = 1e-9;
const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const RECOVERY_OVERALL_PLCC: f64 = 0.9;
const RECOVERY_LEAF_PLCC: f64 = 0.8;
const RECOVERY_BUDGET: Duration = Duration::from_secs(300);
const VOTER_GAIN: f64 = 0.95;
const VOTER_NOISE: f64 = 0.1;
const ABLATION_SLACK: f64 = 0.02;
const LEVEL_FREQ_TOL: f64 = 0.01;
const LM_TOL: f64 = 1e-12;
const PIPELINE_BUDGET: Duration = Duration::from_secs(180);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric oracle equivalence", metric_oracles),
        ("gradient correctness", gradient_checks),
        ("loss-switch gradient isolation", gradient_isolation),
        ("synthetic hierarchical recovery", hierarchical_recovery),
        ("fusion gain over single heads", voter_gain),
        ("ablation ordering", ablation_ordering),
        ("rating mapping distribution", rating_distribution),
        ("pipeline determinism", pipeline_determinism),
        ("LM score bounds and symmetry", lm_score_properties),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        println!("acceptance {} {name}: {} ({secs:.1}s) {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let (a, b) = random_pair(&mut rng, i);
        let pairs = [
            (pearson(&a, &b), oracle_pearson(&a, &b)),
            (hiaa_core::metrics::spearman(&a, &b), oracle_spearman(&a, &b)),
            (hiaa_core::metrics::kendall_tau_b(&a, &b), oracle_kendall_tau_b(&a, &b)),
        ];
        for (got, want) in pairs {
            if !close(got, want, ORACLE_TOL) {
                mismatches += 1;
            }
            if let (Some(x), Some(y)) = (got, want) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < ORACLE_BUDGET,
        format!("1000 pairs, {mismatches} mismatches, max |diff| {worst:.1e} (tol {ORACLE_TOL:e})"),
    )
}

fn gradient_checks() -> Outcome {
    use AnnotationType::{Overall, TwelveDim};
    let start = Instant::now();
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut vanishing = 0;
    for seed in 0..50u64 {
        let flags = [[Overall, Overall], [Overall, TwelveDim], [TwelveDim, TwelveDim]][seed as usize % 3];
        let case = Stage1Case::random(seed, flags);
        let (_, grads) = case.gradient();
        let (f, w, v) = check_gradient(&case.params, &grads, |p| case.loss(p));
        failures += f.len();
        worst = worst.max(w);
        vanishing += v;
        checked += case.params.param_count();

        let voter = VoterCase::random(seed, 4, 2);
        let (f, w, v) = check_gradient(&voter.params, &voter.gradient(), |p| voter.loss(p));
        failures += f.len();
        worst = worst.max(w);
        vanishing += v;
        checked += voter.params.param_count();
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < GRAD_BUDGET,
        format!("50 configs (D=8, W=4, H=4, batch 2), {checked} entries, {failures} failures, worst rel err {worst:.1e} (tol {FD_REL_TOL:e}); \
             {vanishing} vanishing entries agree only within finite-difference rounding ({FD_NOISE_ULPS} ulps of the loss)"),
    )
}

fn gradient_isolation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nonzero = Vec::new();
    let mut checked = 0;
    for i in 0..100 {
        let dims = if i % 2 == 0 { tiny_dims() } else { hiaa_core::model::ModelDims::default() };
        let params = random_model(&mut rng, dims);
        let config = Stage1Config { dims, ..Stage1Config::default() };
        for f in [AnnotationType::Overall, AnnotationType::TwelveDim] {
            let sample = random_sample(&mut rng, i, f);
            let x = hiaa_core::backbone::derive_features(sample.feature_seed, dims.feature_dim);
            let (_, g) = trainer::batch_loss_and_gradient(&params, &[(&x, &sample)], &config).unwrap();
            let silent = match f {
                AnnotationType::Overall => g.expert_head.tensors(),
                AnnotationType::TwelveDim => g.reg_head.tensors(),
            };
            for (name, t) in silent {
                checked += 1;
                if t.iter().any(|v| *v != 0.0) {
                    nonzero.push(name);
                }
            }
        }
    }
    outcome(nonzero.is_empty(), format!("{checked} tensors checked for exact zeros, nonzero: {nonzero:?}"))
}

/// The synthetic corpus of criteria 4 and 6: 2,500 fully annotated records
/// (every held-out sample needs leaf ground truth), the first 2,000 for
/// training and the last 500 held out.
fn recovery_corpus(overall_fraction: f64) -> Vec<ScoredSample> {
    let config = SynthConfig { n: 2500, seed: 0, noise_sigma: 0.02, overall_fraction, ..SynthConfig::default() };
    let records: Vec<_> = generate(&config).unwrap().into_iter().map(|r| r.record).collect();
    build_samples(&records).unwrap()
}

fn expert_plcc(scores: &[HeadScores], samples: &[ScoredSample], d: Dimension) -> f64 {
    let pred: Vec<f64> = scores.iter().map(|s| s.expert[d.index()]).collect();
    let truth: Vec<f64> = samples.iter().map(|s| s.scores[&d]).collect();
    pearson(&pred, &truth).unwrap_or(f64::NAN)
}

fn recovery_readout(params: &ModelParams, test: &[ScoredSample]) -> (f64, f64, Dimension) {
    let scores = score_all(params, test).unwrap();
    let overall = expert_plcc(&scores, test, Dimension::OverallAesthetic);
    let (worst_leaf, leaf) = Dimension::LEAVES
        .iter()
        .map(|&d| (expert_plcc(&scores, test, d), d))
        .fold((f64::INFINITY, Dimension::Outfit), |a, b| if b.0 < a.0 { b } else { a });
    (overall, worst_leaf, leaf)
}

fn hierarchical_recovery() -> Outcome {
    let start = Instant::now();
    let samples = recovery_corpus(0.0);
    let (train, test) = samples.split_at(2000);
    let ckpt = train_stage1(train, &Stage1Config::default()).unwrap();
    let (overall, worst_leaf, leaf) = recovery_readout(&ckpt.model, test);
    let elapsed = start.elapsed();
    let pass = overall >= RECOVERY_OVERALL_PLCC && worst_leaf >= RECOVERY_LEAF_PLCC && elapsed < RECOVERY_BUDGET;

    // same data, longer schedule; reported for context only
    let long = Stage1Config { epochs: 20, ..Stage1Config::default() };
    let (l_overall, l_worst, l_leaf) = recovery_readout(&train_stage1(train, &long).unwrap().model, test);
    outcome(
        pass,
        format!(
            "defaults (1 epoch, {} steps): overall plcc {overall:.4} (need {RECOVERY_OVERALL_PLCC}), worst leaf {} {worst_leaf:.4} (need {RECOVERY_LEAF_PLCC}); \
             [context, not scored: 20 epochs gives overall {l_overall:.4}, worst leaf {} {l_worst:.4}]",
            train.len().div_ceil(32),
            leaf.as_str(),
            l_leaf.as_str(),
        ),
    )
}

fn voter_gain() -> Outcome {
    let noise = Normal::new(0.0, VOTER_NOISE).unwrap();
    let mut wins = 0;
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut draw = |n: usize| -> (Vec<[f64; 3]>, Vec<f64>) {
            (0..n)
                .map(|_| {
                    let y: f64 = rng.random_range(0.0..1.0);
                    ([y + noise.sample(&mut rng), y + noise.sample(&mut rng), y + noise.sample(&mut rng)], y)
                })
                .unzip()
        };
        let (train_x, train_y) = draw(5000);
        let (test_x, test_y) = draw(1000);
        let voter = train_metavoter(&train_x, &train_y, &VoterConfig { seed, ..VoterConfig::default() }).unwrap();
        let fused: Vec<f64> = test_x.iter().map(|x| voter.forward_eval(*x).unwrap()).collect();
        let fused_mae = mae_loss(&fused, &test_y).unwrap();
        let best_single = (0..3)
            .map(|h| mae_loss(&test_x.iter().map(|x| x[h]).collect::<Vec<_>>(), &test_y).unwrap())
            .fold(f64::INFINITY, f64::min);
        let ratio = fused_mae / best_single;
        wins += usize::from(ratio <= VOTER_GAIN);
        ratios.push(format!("{ratio:.3}"));
    }
    outcome(wins >= 4, format!("fused/best-single MAE per seed {ratios:?}, {wins}/5 seeds at or below {VOTER_GAIN}"))
}

/// Overall PLCC on the held-out 500 for (lm, reg, expert, metavoter).
fn ablation_plcc(samples: &[ScoredSample]) -> [f64; 4] {
    let (train, test) = samples.split_at(2000);
    let ckpt = train_stage1(train, &Stage1Config::default()).unwrap();
    let train_scores = score_all(&ckpt.model, train).unwrap();
    let inputs: Vec<[f64; 3]> = train_scores.iter().map(HeadScores::voter_input).collect();
    let targets: Vec<f64> = train.iter().map(ScoredSample::overall).collect();
    let voter = train_metavoter(&inputs, &targets, &VoterConfig::default()).unwrap();
    let mut scores = score_all(&ckpt.model, test).unwrap();
    for s in &mut scores {
        s.fused = Some(voter.forward_eval(s.voter_input()).unwrap());
    }
    HeadKind::ALL.map(|head| evaluate(test, &scores, head).unwrap().overall().plcc.unwrap_or(f64::NAN))
}

fn ablation_ordering() -> Outcome {
    let [lm, reg, expert, fused] = ablation_plcc(&recovery_corpus(0.0));
    let pass = expert >= reg && fused >= lm.max(reg).max(expert) - ABLATION_SLACK;
    // with the default 54% overall-only records the regression head is trained
    // too; reported for context only
    let [m_lm, m_reg, m_exp, m_fused] = ablation_plcc(&recovery_corpus(SynthConfig::default().overall_fraction));
    outcome(
        pass,
        format!(
            "overall plcc lm {lm:.4}, reg {reg:.4}, expert {expert:.4}, metavoter {fused:.4}; need expert >= reg and metavoter >= max - {ABLATION_SLACK}; \
             [context, not scored: mixed corpus gives lm {m_lm:.4}, reg {m_reg:.4}, expert {m_exp:.4}, metavoter {m_fused:.4}]"
        ),
    )
}

fn rating_distribution() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 100_000;
    let mut counts = [0usize; 5];
    for _ in 0..n {
        let s: f64 = rng.random_range(0.0..=1.0);
        counts[RatingLevel::from_score(s).unwrap().code() as usize - 1] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let balanced = freqs.iter().all(|f| (f - 0.2).abs() <= LEVEL_FREQ_TOL);

    let expected = [(0.0, 1), (0.2, 1), (0.4, 2), (0.6, 3), (0.8, 4), (1.0, 5)];
    let boundaries_ok = expected.iter().all(|&(s, code)| RatingLevel::from_score(s).unwrap().code() == code);

    // exactly one level per score on a fine grid: the level's interval contains s
    let grid_ok = (0..=100_000).all(|i| {
        let s = i as f64 / 100_000.0;
        let z = RatingLevel::from_score(s).unwrap().code() as f64;
        let hits = (1..=5).filter(|&k| {
            let k = k as f64;
            (k - 1.0) / 5.0 < s && s <= k / 5.0 || (s == 0.0 && k == 1.0)
        });
        hits.count() == 1 && ((z - 1.0) / 5.0 < s && s <= z / 5.0 || s == 0.0 && z == 1.0)
    });
    let out_of_range = RatingLevel::from_score(-0.01).is_err() && RatingLevel::from_score(1.01).is_err();
    outcome(
        balanced && boundaries_ok && grid_ok && out_of_range,
        format!(
            "frequencies {:?} (0.20 ± {LEVEL_FREQ_TOL}), boundaries {}, unique level on grid {}",
            freqs.iter().map(|f| format!("{f:.4}")).collect::<Vec<_>>(),
            if boundaries_ok { "ok" } else { "WRONG" },
            if grid_ok { "ok" } else { "WRONG" },
        ),
    )
}

fn run_pipeline(dir: &Path) -> Result<(), String> {
    for args in
        [&["synth", "--n", "1000"][..], &["ingest"], &["genqa"], &["split"], &["train"], &["train-voter"], &["eval"]]
    {
        let o = Command::new(env!("CARGO_BIN_EXE_hiaa"))
            .args(["--seed", "42", "--out"])
            .arg(dir)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr).trim()));
        }
    }
    Ok(())
}

fn pipeline_determinism() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = run_pipeline(a.path()).and_then(|_| run_pipeline(b.path())) {
        return outcome(false, format!("pipeline failed: {e}"));
    }
    let elapsed = start.elapsed();
    let files = [
        "stage1.json",
        "model.json",
        "report.json",
        "report.txt",
        "records.jsonl",
        "samples.jsonl",
        "qa.jsonl",
        "split.json",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok())
        .collect();
    outcome(
        differing.is_empty() && elapsed < PIPELINE_BUDGET,
        format!("two runs on 1000 records, {} artifacts compared, differing: {differing:?}", files.len()),
    )
}

fn lm_score_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut bounds, mut symmetry, mut shift) = (0, 0, 0);
    let mut worst_sym: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for _ in 0..10_000 {
        // |logit| <= 10: beyond roughly 36 apart the smallest softmax weight
        // falls below f64 resolution next to 1 and the score rounds onto 1 or 5
        let p: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
        let s = lm_score(&p).unwrap();
        bounds += usize::from(!(s > 1.0 && s < 5.0));
        let rev: Vec<f64> = p.iter().rev().copied().collect();
        let d = (s + lm_score(&rev).unwrap() - 6.0).abs();
        worst_sym = worst_sym.max(d);
        symmetry += usize::from(d > LM_TOL);
        let c = rng.random_range(-50.0..50.0);
        let shifted: Vec<f64> = p.iter().map(|v| v + c).collect();
        let d = (lm_score(&shifted).unwrap() - s).abs();
        worst_shift = worst_shift.max(d);
        shift += usize::from(d > LM_TOL);
    }
    outcome(
        bounds + symmetry + shift == 0,
        format!("10000 vectors: {bounds} out of (1,5), symmetry max err {worst_sym:.1e}, shift max err {worst_shift:.1e} (tol {LM_TOL:e})"),
    )
}
