//! Synthetic annotation corpus with a known hierarchical ground truth.
//!
//! Leaves are `sigmoid(gain · gᵢ·x / √F)` of the sample features under a
//! fixed hidden map `G`, plus Gaussian observation noise, clamped to [0, 1].
//! Parents are exact means of their children: facial over the five facial
//! leaves, appearance over outfit / body shape / looks, and overall over
//! (facial, appearance, environment). A fraction of the records is
//! downgraded to overall-only records from a handful of sources with their
//! own native score scales.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backbone::{derive_features, SampleFeatures};
use crate::datapipe::{AnnotationRecord, MIN_RATERS};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::taxonomy::{Dimension, DIMENSION_COUNT, LEAF_COUNT};

/// Seed of the hidden leaf map; fixed so every corpus shares one ground truth.
pub const HIDDEN_MAP_SEED: u64 = 0x4849_4141_2d47_5431;

/// Overall-only sources and their native `(min, max)` score scales.
pub const SOURCES: [(&str, f64, f64); 6] = [
    ("source_a", 1.0, 10.0),
    ("source_b", 0.0, 1.0),
    ("source_c", 1.0, 5.0),
    ("source_d", 0.0, 100.0),
    ("source_e", 1.0, 7.0),
    ("source_f", 0.0, 10.0),
];

pub const MANUAL_SOURCE: &str = "manual";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Observation noise on each leaf.
    pub noise_sigma: f64,
    /// Fraction of records emitted as overall-only source records.
    pub overall_fraction: f64,
    pub feature_dim: usize,
    pub raters: usize,
    /// Per-rater disagreement around the (noisy) ground truth.
    pub rater_sigma: f64,
    pub gain: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            seed: 0,
            noise_sigma: 0.02,
            overall_fraction: 0.54,
            feature_dim: 32,
            raters: MIN_RATERS,
            rater_sigma: 0.0,
            gain: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMap {
    weights: Matrix,
    gain: f64,
}

impl HiddenMap {
    pub fn fixed(feature_dim: usize, gain: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(HIDDEN_MAP_SEED);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let data = (0..LEAF_COUNT * feature_dim).map(|_| normal.sample(&mut rng)).collect();
        HiddenMap { weights: Matrix::from_vec(LEAF_COUNT, feature_dim, data), gain }
    }

    /// Noiseless leaf scores in `Dimension::LEAVES` order.
    pub fn leaves(&self, features: &SampleFeatures) -> [f64; LEAF_COUNT] {
        let scale = self.gain / libm::sqrt(self.weights.cols() as f64);
        let mut out = [0.0; LEAF_COUNT];
        for (i, o) in out.iter_mut().enumerate() {
            let z = scale * linalg::dot(self.weights.row(i), &features.0);
            *o = 1.0 / (1.0 + libm::exp(-z));
        }
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// All twelve scores in canonical order from leaf scores in leaf order.
pub fn compose(leaves: &[f64; LEAF_COUNT]) -> [f64; DIMENSION_COUNT] {
    let mut out = [0.0; DIMENSION_COUNT];
    for (v, d) in leaves.iter().zip(Dimension::LEAVES) {
        out[d.index()] = *v;
    }
    let facial = mean(&leaves[0..5]);
    let appearance = mean(&leaves[5..8]);
    out[Dimension::FacialAesthetic.index()] = facial;
    out[Dimension::GeneralAppearanceAesthetic.index()] = appearance;
    out[Dimension::OverallAesthetic.index()] = mean(&[facial, appearance, leaves[8]]);
    out
}

/// A generated record together with the latent scores it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub record: AnnotationRecord,
    pub latent: [f64; DIMENSION_COUNT],
}

pub fn generate(config: &SynthConfig) -> Result<Vec<SynthRecord>> {
    if config.n == 0 {
        return Err(Error::Config("synthetic corpus needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&config.overall_fraction) {
        return Err(Error::Config(format!("overall_fraction {} not in [0, 1]", config.overall_fraction)));
    }
    if config.raters < MIN_RATERS {
        return Err(Error::Config(format!("need at least {MIN_RATERS} raters")));
    }
    let noise = Normal::new(0.0, config.noise_sigma)
        .map_err(|_| Error::Config("noise_sigma must be finite and non-negative".into()))?;
    let rater_noise = Normal::new(0.0, config.rater_sigma)
        .map_err(|_| Error::Config("rater_sigma must be finite and non-negative".into()))?;
    let map = HiddenMap::fixed(config.feature_dim, config.gain);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n_overall = libm::round(config.overall_fraction * config.n as f64) as usize;
    let mut order: Vec<usize> = (0..config.n).collect();
    order.shuffle(&mut rng);
    let mut overall_only = alloc::vec![false; config.n];
    for &i in &order[..n_overall] {
        overall_only[i] = true;
    }
    let n_sources = (n_overall / 50).clamp(1, SOURCES.len());

    let mut next_source = 0;
    let mut out = Vec::with_capacity(config.n);
    for (i, &is_overall) in overall_only.iter().enumerate() {
        let feature_seed = rng.next_u64();
        let x = derive_features(feature_seed, config.feature_dim);
        let mut leaves = map.leaves(&x);
        for leaf in &mut leaves {
            *leaf = (*leaf + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
        let latent = compose(&leaves);
        let sample_id = format!("syn{i:06}");
        let record = if is_overall {
            let (name, lo, hi) = SOURCES[next_source % n_sources];
            next_source += 1;
            AnnotationRecord {
                sample_id,
                source: String::from(name),
                rater_scores: None,
                raw_overall: Some(lo + (hi - lo) * latent[Dimension::OverallAesthetic.index()]),
                feature_seed,
            }
        } else {
            let mut rater_scores = BTreeMap::new();
            for d in Dimension::ALL {
                let scores = (0..config.raters)
                    .map(|_| (latent[d.index()] + rater_noise.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect();
                rater_scores.insert(d, scores);
            }
            AnnotationRecord {
                sample_id,
                source: String::from(MANUAL_SOURCE),
                rater_scores: Some(rater_scores),
                raw_overall: None,
                feature_seed,
            }
        };
        out.push(SynthRecord { record, latent });
    }
    Ok(out)
}
