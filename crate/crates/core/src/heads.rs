//! LM, Regression and Expert scoring heads.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::HiddenStates;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::Parameters;
use crate::taxonomy::{Dimension, DIMENSION_COUNT, LEAF_COUNT};

pub const LEVEL_COUNT: usize = 5;

fn check_width(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { context, expected, found })
    }
}

/// Per-slot classifier over the five rating words. Logit `i` is level code `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmHeadParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LmHeadParams {
    pub fn init<R: Rng + ?Sized>(hidden_dim: usize, rng: &mut R) -> Self {
        LmHeadParams { weight: Matrix::glorot(LEVEL_COUNT, hidden_dim, rng), bias: vec![0.0; LEVEL_COUNT] }
    }
}

impl Parameters for LmHeadParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![("lm_head.weight", self.weight.as_slice()), ("lm_head.bias", &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![("lm_head.weight", self.weight.as_mut_slice()), ("lm_head.bias", &mut self.bias)]
    }
}

/// `slot_count × 5` rating-word logits.
pub fn lm_logits(params: &LmHeadParams, h: &HiddenStates) -> Result<Matrix> {
    check_width("lm head input", params.weight.cols(), h.matrix.cols())?;
    let mut out = Matrix::zeros(h.slot_count(), LEVEL_COUNT);
    for k in 0..h.slot_count() {
        let row = linalg::affine(&params.weight, h.matrix.row(k), &params.bias);
        out.row_mut(k).copy_from_slice(&row);
    }
    Ok(out)
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Expected rating code under the softmax of the five logits, in (1, 5).
pub fn lm_score(logits: &[f64]) -> Result<f64> {
    check_width("lm score logits", LEVEL_COUNT, logits.len())?;
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(softmax(logits).iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum())
}

/// Fixed affine map from the analytic range [1, 5] onto [0, 1].
pub fn normalize_lm_score(s_lm: f64) -> Result<f64> {
    if !(1.0..=5.0).contains(&s_lm) {
        return Err(Error::OutOfRange { what: "lm score", value: s_lm });
    }
    Ok((s_lm - 1.0) / 4.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegHeadParams {
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl RegHeadParams {
    pub fn init<R: Rng + ?Sized>(hidden_dim: usize, rng: &mut R) -> Self {
        let m = Matrix::glorot(1, hidden_dim, rng);
        RegHeadParams { weight: m.as_slice().to_vec(), bias: 0.0 }
    }
}

impl Parameters for RegHeadParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![("reg_head.weight", &self.weight), ("reg_head.bias", core::slice::from_ref(&self.bias))]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![("reg_head.weight", &mut self.weight), ("reg_head.bias", core::slice::from_mut(&mut self.bias))]
    }
}

/// Unbounded scalar score from the last slot.
pub fn reg_score(params: &RegHeadParams, h: &HiddenStates) -> Result<f64> {
    check_width("regression head input", params.weight.len(), h.matrix.cols())?;
    Ok(linalg::dot(&params.weight, h.last_token()) + params.bias)
}

/// Two-layer `in → width → 1` network with a rectifier between the layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ffn {
    pub hidden_weight: Matrix,
    pub hidden_bias: Vec<f64>,
    pub out_weight: Vec<f64>,
    pub out_bias: f64,
}

#[derive(Debug, Clone)]
struct FfnCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl Ffn {
    pub fn zeros(inputs: usize, width: usize) -> Self {
        Ffn {
            hidden_weight: Matrix::zeros(width, inputs),
            hidden_bias: vec![0.0; width],
            out_weight: vec![0.0; width],
            out_bias: 0.0,
        }
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, width: usize, rng: &mut R) -> Self {
        Ffn {
            hidden_weight: Matrix::glorot(width, inputs, rng),
            hidden_bias: vec![0.0; width],
            out_weight: Matrix::glorot(1, width, rng).as_slice().to_vec(),
            out_bias: 0.0,
        }
    }

    fn forward(&self, input: &[f64]) -> (f64, FfnCache) {
        let pre = linalg::affine(&self.hidden_weight, input, &self.hidden_bias);
        let act: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let out = linalg::dot(&self.out_weight, &act) + self.out_bias;
        (out, FfnCache { input: input.to_vec(), pre, act })
    }

    /// Returns `∂L/∂input`.
    fn backward(&self, cache: &FfnCache, d_out: f64, grads: &mut Ffn) -> Vec<f64> {
        linalg::axpy(d_out, &cache.act, &mut grads.out_weight);
        grads.out_bias += d_out;
        let d_pre: Vec<f64> =
            self.out_weight.iter().zip(&cache.pre).map(|(w, &z)| if z > 0.0 { d_out * w } else { 0.0 }).collect();
        grads.hidden_weight.add_outer(&d_pre, &cache.input);
        linalg::add_assign(&mut grads.hidden_bias, &d_pre);
        let mut d_input = vec![0.0; cache.input.len()];
        self.hidden_weight.add_matvec_t(&d_pre, &mut d_input);
        d_input
    }

    fn tensors<'a>(&'a self, names: [&'static str; 4]) -> [(&'static str, &'a [f64]); 4] {
        [
            (names[0], self.hidden_weight.as_slice()),
            (names[1], &self.hidden_bias),
            (names[2], &self.out_weight),
            (names[3], core::slice::from_ref(&self.out_bias)),
        ]
    }

    fn tensors_mut<'a>(&'a mut self, names: [&'static str; 4]) -> [(&'static str, &'a mut [f64]); 4] {
        [
            (names[0], self.hidden_weight.as_mut_slice()),
            (names[1], &mut self.hidden_bias),
            (names[2], &mut self.out_weight),
            (names[3], core::slice::from_mut(&mut self.out_bias)),
        ]
    }
}

const FACIAL_NAMES: [&str; 4] = [
    "expert_head.facial.hidden_weight",
    "expert_head.facial.hidden_bias",
    "expert_head.facial.out_weight",
    "expert_head.facial.out_bias",
];
const APPEARANCE_NAMES: [&str; 4] = [
    "expert_head.appearance.hidden_weight",
    "expert_head.appearance.hidden_bias",
    "expert_head.appearance.out_weight",
    "expert_head.appearance.out_bias",
];
const OVERALL_NAMES: [&str; 4] = [
    "expert_head.overall.hidden_weight",
    "expert_head.overall.hidden_bias",
    "expert_head.overall.out_weight",
    "expert_head.overall.out_bias",
];

/// Hierarchical head: a linear layer produces the nine leaf scores, and each
/// parent node is a small FFN over its children's scalar scores only.
///
/// The overall FFN's inputs are ordered (environment, facial, appearance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertHeadParams {
    pub leaf_weight: Matrix,
    pub leaf_bias: Vec<f64>,
    pub facial_ffn: Ffn,
    pub appearance_ffn: Ffn,
    pub overall_ffn: Ffn,
}

impl ExpertHeadParams {
    pub fn zeros(hidden_dim: usize, width: usize) -> Self {
        ExpertHeadParams {
            leaf_weight: Matrix::zeros(LEAF_COUNT, hidden_dim),
            leaf_bias: vec![0.0; LEAF_COUNT],
            facial_ffn: Ffn::zeros(5, width),
            appearance_ffn: Ffn::zeros(3, width),
            overall_ffn: Ffn::zeros(3, width),
        }
    }

    pub fn init<R: Rng + ?Sized>(hidden_dim: usize, width: usize, rng: &mut R) -> Self {
        ExpertHeadParams {
            leaf_weight: Matrix::glorot(LEAF_COUNT, hidden_dim, rng),
            leaf_bias: vec![0.0; LEAF_COUNT],
            facial_ffn: Ffn::init(5, width, rng),
            appearance_ffn: Ffn::init(3, width, rng),
            overall_ffn: Ffn::init(3, width, rng),
        }
    }
}

impl Parameters for ExpertHeadParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = vec![
            ("expert_head.leaf_weight", self.leaf_weight.as_slice()),
            ("expert_head.leaf_bias", &self.leaf_bias[..]),
        ];
        out.extend(self.facial_ffn.tensors(FACIAL_NAMES));
        out.extend(self.appearance_ffn.tensors(APPEARANCE_NAMES));
        out.extend(self.overall_ffn.tensors(OVERALL_NAMES));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = vec![
            ("expert_head.leaf_weight", self.leaf_weight.as_mut_slice()),
            ("expert_head.leaf_bias", &mut self.leaf_bias[..]),
        ];
        out.extend(self.facial_ffn.tensors_mut(FACIAL_NAMES));
        out.extend(self.appearance_ffn.tensors_mut(APPEARANCE_NAMES));
        out.extend(self.overall_ffn.tensors_mut(OVERALL_NAMES));
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExpertCache {
    pooled: Vec<f64>,
    slots: usize,
    facial: FfnCache,
    appearance: FfnCache,
    overall: FfnCache,
}

/// Twelve raw node scores in canonical order; the last is the overall node.
pub fn expert_scores(params: &ExpertHeadParams, h: &HiddenStates) -> Result<[f64; DIMENSION_COUNT]> {
    expert_scores_cached(params, h).map(|(s, _)| s)
}

pub fn expert_scores_cached(
    params: &ExpertHeadParams,
    h: &HiddenStates,
) -> Result<([f64; DIMENSION_COUNT], ExpertCache)> {
    if h.slot_count() != DIMENSION_COUNT {
        return Err(Error::WrongPromptKind { expected: DIMENSION_COUNT, found: h.slot_count() });
    }
    check_width("expert head input", params.leaf_weight.cols(), h.matrix.cols())?;
    let pooled = h.mean_pool();
    let leaves = linalg::affine(&params.leaf_weight, &pooled, &params.leaf_bias);
    let (facial, facial_cache) = params.facial_ffn.forward(&leaves[0..5]);
    let (appearance, appearance_cache) = params.appearance_ffn.forward(&leaves[5..8]);
    let (overall, overall_cache) = params.overall_ffn.forward(&[leaves[8], facial, appearance]);

    let mut scores = [0.0; DIMENSION_COUNT];
    for (leaf, &dim) in leaves.iter().zip(Dimension::LEAVES.iter()) {
        scores[dim.index()] = *leaf;
    }
    scores[Dimension::FacialAesthetic.index()] = facial;
    scores[Dimension::GeneralAppearanceAesthetic.index()] = appearance;
    scores[Dimension::OverallAesthetic.index()] = overall;
    let cache = ExpertCache {
        pooled,
        slots: h.slot_count(),
        facial: facial_cache,
        appearance: appearance_cache,
        overall: overall_cache,
    };
    Ok((scores, cache))
}

/// Backward pass from per-node score gradients (canonical order). Returns
/// `∂L/∂h`, one row per slot.
pub fn expert_backward(
    params: &ExpertHeadParams,
    cache: &ExpertCache,
    d_scores: &[f64; DIMENSION_COUNT],
    grads: &mut ExpertHeadParams,
) -> Matrix {
    let mut d_leaves = [0.0; LEAF_COUNT];
    for (i, dim) in Dimension::LEAVES.iter().enumerate() {
        d_leaves[i] = d_scores[dim.index()];
    }
    let d_overall_in = params.overall_ffn.backward(
        &cache.overall,
        d_scores[Dimension::OverallAesthetic.index()],
        &mut grads.overall_ffn,
    );
    d_leaves[8] += d_overall_in[0];
    let d_facial = d_scores[Dimension::FacialAesthetic.index()] + d_overall_in[1];
    let d_appearance = d_scores[Dimension::GeneralAppearanceAesthetic.index()] + d_overall_in[2];

    let d_facial_in = params.facial_ffn.backward(&cache.facial, d_facial, &mut grads.facial_ffn);
    linalg::add_assign(&mut d_leaves[0..5], &d_facial_in);
    let d_app_in = params.appearance_ffn.backward(&cache.appearance, d_appearance, &mut grads.appearance_ffn);
    linalg::add_assign(&mut d_leaves[5..8], &d_app_in);

    grads.leaf_weight.add_outer(&d_leaves, &cache.pooled);
    linalg::add_assign(&mut grads.leaf_bias, &d_leaves);

    let mut d_pooled = vec![0.0; cache.pooled.len()];
    params.leaf_weight.add_matvec_t(&d_leaves, &mut d_pooled);
    let scale = 1.0 / cache.slots as f64;
    let mut d_h = Matrix::zeros(cache.slots, d_pooled.len());
    for k in 0..cache.slots {
        linalg::axpy(scale, &d_pooled, d_h.row_mut(k));
    }
    d_h
}
