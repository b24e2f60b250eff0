#![allow(dead_code)]

use hiaa_core::backbone::{derive_features, SampleFeatures};
use hiaa_core::datapipe::{AnnotationType, ScoredSample};
use hiaa_core::metavoter::{self, MetaVoterParams, VoterConfig};
use hiaa_core::model::{ModelDims, ModelParams, Parameters};
use hiaa_core::trainer::{self, Stage1Config};
use hiaa_core::Dimension;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Rounding error of a loss evaluation, in ulps of the loss value. Entries
/// whose analytic gradient is exactly zero show up to ~30 ulps of noise.
pub const FD_NOISE_ULPS: f64 = 64.0;

/// Smallest derivative difference a central difference can resolve at this
/// loss value; below it the difference quotient is rounding noise.
pub fn fd_resolution(loss_plus: f64, loss_minus: f64) -> f64 {
    FD_NOISE_ULPS * f64::EPSILON * loss_plus.abs().max(loss_minus.abs()) / (2.0 * FD_STEP)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

#[derive(Debug)]
pub struct FdFailure {
    pub tensor: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Central differences of `loss` against every entry of `params`, compared
/// with `analytic`. An entry passes when its relative error is below
/// `FD_REL_TOL`, or, failing that, when the two values agree to within the
/// rounding resolution of the difference quotient (gradients that vanish).
/// Returns the failing entries, the worst relative error among entries judged
/// by the relative test, and the number of entries passed by the resolution rule.
pub fn check_gradient<P: Parameters + Clone>(
    params: &P,
    analytic: &P,
    loss: impl Fn(&P) -> f64,
) -> (Vec<FdFailure>, f64, usize) {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut unresolved = 0;
    let grads = analytic.tensors();
    for (t, (name, analytic)) in grads.iter().enumerate() {
        let len = analytic.len();
        for i in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut()[t].1[i] += FD_STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[t].1[i] -= FD_STEP;
            let (lp, lm) = (loss(&plus), loss(&minus));
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let a = analytic[i];
            let err = relative_error(a, numeric);
            if err >= FD_REL_TOL && (a - numeric).abs() <= fd_resolution(lp, lm) {
                unresolved += 1;
                continue;
            }
            worst = worst.max(err);
            if err >= FD_REL_TOL {
                failures.push(FdFailure { tensor: name, index: i, analytic: a, numeric });
            }
        }
    }
    (failures, worst, unresolved)
}

pub fn tiny_dims() -> ModelDims {
    ModelDims { feature_dim: 4, embed_dim: 3, hidden_dim: 8, expert_width: 4 }
}

pub fn random_sample(rng: &mut impl Rng, id: usize, f: AnnotationType) -> ScoredSample {
    let scores = match f {
        AnnotationType::Overall => [(Dimension::OverallAesthetic, rng.random_range(0.0..=1.0))].into_iter().collect(),
        AnnotationType::TwelveDim => Dimension::ALL.iter().map(|&d| (d, rng.random_range(0.0..=1.0))).collect(),
    };
    ScoredSample::new(format!("r{id}"), "rand".into(), f, scores, rng.random()).unwrap()
}

/// Randomized stage-1 parameters: Glorot weights plus non-zero biases so that
/// every code path carries signal.
pub fn random_model(rng: &mut impl Rng, dims: ModelDims) -> ModelParams {
    let mut p = ModelParams::init(rng.random(), dims);
    for (_, t) in p.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    p
}

pub struct Stage1Case {
    pub params: ModelParams,
    pub config: Stage1Config,
    pub features: Vec<SampleFeatures>,
    pub samples: Vec<ScoredSample>,
}

impl Stage1Case {
    pub fn random(seed: u64, flags: [AnnotationType; 2]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = tiny_dims();
        let config = Stage1Config {
            dims,
            lambda: rng.random_range(0.5..2.0),
            mu: rng.random_range(0.5..2.0),
            ..Stage1Config::default()
        };
        let samples: Vec<_> = flags.iter().enumerate().map(|(i, &f)| random_sample(&mut rng, i, f)).collect();
        let features = samples.iter().map(|s| derive_features(s.feature_seed, dims.feature_dim)).collect();
        Stage1Case { params: random_model(&mut rng, dims), config, features, samples }
    }

    pub fn batch(&self) -> Vec<(&SampleFeatures, &ScoredSample)> {
        self.features.iter().zip(&self.samples).collect()
    }

    pub fn loss(&self, params: &ModelParams) -> f64 {
        trainer::batch_loss(params, &self.batch(), &self.config).unwrap()
    }

    pub fn gradient(&self) -> (f64, ModelParams) {
        trainer::batch_loss_and_gradient(&self.params, &self.batch(), &self.config).unwrap()
    }
}

pub struct VoterCase {
    pub params: MetaVoterParams,
    pub inputs: Vec<[f64; 3]>,
    pub targets: Vec<f64>,
}

impl VoterCase {
    pub fn random(seed: u64, width: usize, batch: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = MetaVoterParams::init(&VoterConfig { width, seed, ..VoterConfig::default() });
        for (_, t) in params.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let inputs = (0..batch).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let targets = (0..batch).map(|_| rng.random_range(-1.0..2.0)).collect();
        VoterCase { params, inputs, targets }
    }

    pub fn loss(&self, params: &MetaVoterParams) -> f64 {
        metavoter::batch_mae(params, &self.inputs, &self.targets).unwrap()
    }

    pub fn gradient(&self) -> MetaVoterParams {
        metavoter::batch_mae_and_gradient(&self.params, &self.inputs, &self.targets).unwrap().1
    }
}

// Direct-definition correlation oracles. `None` where the definition divides
// by zero (a constant input).

pub fn oracle_pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

/// Rank of each entry: one plus the number of smaller entries plus half the
/// number of other equal entries.
pub fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn oracle_spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    oracle_pearson(&oracle_ranks(a), &oracle_ranks(b))
}

/// Kendall tau-b by counting every pair.
pub fn oracle_kendall_tau_b(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    let (mut concordant, mut discordant, mut tied_a, mut tied_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                tied_a += 1;
            }
            if db == 0.0 {
                tied_b += 1;
            }
            if da != 0.0 && db != 0.0 {
                if (da > 0.0) == (db > 0.0) {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = ((pairs - tied_a) as f64 * (pairs - tied_b) as f64).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some((concordant - discordant) as f64 / denom)
}

/// A random pair of length 3..=200. Every third instance draws from a handful
/// of values so that ties dominate; some of those are constant.
pub fn random_pair(rng: &mut impl Rng, instance: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(3..=200);
    let draw = |rng: &mut ChaCha8Rng, levels: usize| -> Vec<f64> {
        (0..n)
            .map(|_| if levels == 0 { rng.random_range(-1.0..1.0) } else { rng.random_range(0..levels) as f64 * 0.25 })
            .collect()
    };
    let mut r = ChaCha8Rng::seed_from_u64(rng.random());
    match instance % 3 {
        0 => {
            let a = draw(&mut r, 0);
            let b = a.iter().map(|x| x + r.random_range(-0.5..0.5)).collect();
            (a, b)
        }
        1 => (draw(&mut r, 0), draw(&mut r, 0)),
        _ => {
            let la = r.random_range(1..=5);
            let lb = r.random_range(1..=5);
            (draw(&mut r, la), draw(&mut r, lb))
        }
    }
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}
