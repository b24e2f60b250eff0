//! Small per-slot encoder standing in for the vision-language model.
//!
//! Each answer slot is encoded independently as
//! `dense2(tanh(dense1([features; slot_embedding])))`. The twelve-dimension
//! prompt uses slot embeddings `0..12` in canonical order and the overall
//! prompt uses embedding `12`.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::Parameters;

/// Twelve dimension slots plus one overall slot.
pub const SLOT_EMBEDDINGS: usize = 13;
pub const OVERALL_SLOT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneDims {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for BackboneDims {
    fn default() -> Self {
        BackboneDims { feature_dim: 32, embed_dim: 16, hidden_dim: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFeatures(pub Vec<f64>);

/// Deterministic standard-normal feature vector for a sample.
pub fn derive_features(feature_seed: u64, feature_dim: usize) -> SampleFeatures {
    let mut rng = ChaCha8Rng::seed_from_u64(feature_seed);
    SampleFeatures((0..feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Overall,
    TwelveDim,
}

impl PromptKind {
    pub fn slot_count(self) -> usize {
        match self {
            PromptKind::Overall => 1,
            PromptKind::TwelveDim => 12,
        }
    }

    fn embedding_index(self, slot: usize) -> usize {
        match self {
            PromptKind::Overall => OVERALL_SLOT,
            PromptKind::TwelveDim => slot,
        }
    }
}

/// One hidden vector per answer slot.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    pub matrix: Matrix,
}

impl HiddenStates {
    pub fn slot_count(&self) -> usize {
        self.matrix.rows()
    }

    /// Final slot's vector, read by the Regression head.
    pub fn last_token(&self) -> &[f64] {
        self.matrix.row(self.matrix.rows() - 1)
    }

    /// Mean of the slot vectors.
    pub fn mean_pool(&self) -> Vec<f64> {
        let n = self.matrix.rows();
        let mut out = vec![0.0; self.matrix.cols()];
        for r in 0..n {
            linalg::add_assign(&mut out, self.matrix.row(r));
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneParams {
    pub slot_embeddings: Matrix,
    pub dense1_weight: Matrix,
    pub dense1_bias: Vec<f64>,
    pub dense2_weight: Matrix,
    pub dense2_bias: Vec<f64>,
}

impl BackboneParams {
    pub fn zeros(dims: BackboneDims) -> Self {
        let BackboneDims { feature_dim, embed_dim, hidden_dim } = dims;
        BackboneParams {
            slot_embeddings: Matrix::zeros(SLOT_EMBEDDINGS, embed_dim),
            dense1_weight: Matrix::zeros(hidden_dim, feature_dim + embed_dim),
            dense1_bias: vec![0.0; hidden_dim],
            dense2_weight: Matrix::zeros(hidden_dim, hidden_dim),
            dense2_bias: vec![0.0; hidden_dim],
        }
    }

    pub fn dims(&self) -> BackboneDims {
        let embed_dim = self.slot_embeddings.cols();
        BackboneDims {
            feature_dim: self.dense1_weight.cols() - embed_dim,
            embed_dim,
            hidden_dim: self.dense1_weight.rows(),
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let d = self.dims();
        let mismatch = |context, expected, found| Error::ShapeMismatch { context, expected, found };
        if self.slot_embeddings.rows() != SLOT_EMBEDDINGS {
            return Err(mismatch("slot embeddings", SLOT_EMBEDDINGS, self.slot_embeddings.rows()));
        }
        if self.dense1_bias.len() != d.hidden_dim {
            return Err(mismatch("dense1 bias", d.hidden_dim, self.dense1_bias.len()));
        }
        if self.dense2_weight.rows() != d.hidden_dim || self.dense2_weight.cols() != d.hidden_dim {
            return Err(mismatch("dense2 weight", d.hidden_dim, self.dense2_weight.cols()));
        }
        if self.dense2_bias.len() != d.hidden_dim {
            return Err(mismatch("dense2 bias", d.hidden_dim, self.dense2_bias.len()));
        }
        Ok(())
    }
}

impl Parameters for BackboneParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("backbone.slot_embeddings", self.slot_embeddings.as_slice()),
            ("backbone.dense1_weight", self.dense1_weight.as_slice()),
            ("backbone.dense1_bias", &self.dense1_bias),
            ("backbone.dense2_weight", self.dense2_weight.as_slice()),
            ("backbone.dense2_bias", &self.dense2_bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("backbone.slot_embeddings", self.slot_embeddings.as_mut_slice()),
            ("backbone.dense1_weight", self.dense1_weight.as_mut_slice()),
            ("backbone.dense1_bias", &mut self.dense1_bias),
            ("backbone.dense2_weight", self.dense2_weight.as_mut_slice()),
            ("backbone.dense2_bias", &mut self.dense2_bias),
        ]
    }
}

/// Glorot-uniform weights and zero biases. Slot embeddings are drawn with the
/// bound for a `13 × E` table.
pub fn init_backbone(seed: u64, dims: BackboneDims) -> BackboneParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let BackboneDims { feature_dim, embed_dim, hidden_dim } = dims;
    BackboneParams {
        slot_embeddings: Matrix::glorot(SLOT_EMBEDDINGS, embed_dim, &mut rng),
        dense1_weight: Matrix::glorot(hidden_dim, feature_dim + embed_dim, &mut rng),
        dense1_bias: vec![0.0; hidden_dim],
        dense2_weight: Matrix::glorot(hidden_dim, hidden_dim, &mut rng),
        dense2_bias: vec![0.0; hidden_dim],
    }
}

/// Per-slot activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    prompt: PromptKind,
    inputs: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
}

pub fn encode(params: &BackboneParams, features: &SampleFeatures, prompt: PromptKind) -> Result<HiddenStates> {
    encode_cached(params, features, prompt).map(|(h, _)| h)
}

pub fn encode_cached(
    params: &BackboneParams,
    features: &SampleFeatures,
    prompt: PromptKind,
) -> Result<(HiddenStates, EncodeCache)> {
    params.check_shapes()?;
    let dims = params.dims();
    if features.0.len() != dims.feature_dim {
        return Err(Error::ShapeMismatch {
            context: "sample features",
            expected: dims.feature_dim,
            found: features.0.len(),
        });
    }
    let slots = prompt.slot_count();
    let mut matrix = Matrix::zeros(slots, dims.hidden_dim);
    let mut cache = EncodeCache { prompt, inputs: Vec::with_capacity(slots), activations: Vec::with_capacity(slots) };
    for slot in 0..slots {
        let mut input = features.0.clone();
        input.extend_from_slice(params.slot_embeddings.row(prompt.embedding_index(slot)));
        let mut act = linalg::affine(&params.dense1_weight, &input, &params.dense1_bias);
        act.iter_mut().for_each(|v| *v = libm::tanh(*v));
        let out = linalg::affine(&params.dense2_weight, &act, &params.dense2_bias);
        matrix.row_mut(slot).copy_from_slice(&out);
        cache.inputs.push(input);
        cache.activations.push(act);
    }
    Ok((HiddenStates { matrix }, cache))
}

/// Accumulates parameter gradients given `d_hidden = ∂L/∂h` (one row per slot).
pub fn backward(params: &BackboneParams, cache: &EncodeCache, d_hidden: &Matrix, grads: &mut BackboneParams) {
    let dims = params.dims();
    for slot in 0..cache.inputs.len() {
        let d_out = d_hidden.row(slot);
        let act = &cache.activations[slot];
        grads.dense2_weight.add_outer(d_out, act);
        linalg::add_assign(&mut grads.dense2_bias, d_out);

        let mut d_act = vec![0.0; dims.hidden_dim];
        params.dense2_weight.add_matvec_t(d_out, &mut d_act);
        let d_pre: Vec<f64> = d_act.iter().zip(act).map(|(g, a)| g * (1.0 - a * a)).collect();

        grads.dense1_weight.add_outer(&d_pre, &cache.inputs[slot]);
        linalg::add_assign(&mut grads.dense1_bias, &d_pre);

        let mut d_input = vec![0.0; dims.feature_dim + dims.embed_dim];
        params.dense1_weight.add_matvec_t(&d_pre, &mut d_input);
        let emb = cache.prompt.embedding_index(slot);
        linalg::add_assign(grads.slot_embeddings.row_mut(emb), &d_input[dims.feature_dim..]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BackboneDims {
        BackboneDims { feature_dim: 4, embed_dim: 3, hidden_dim: 5 }
    }

    #[test]
    fn features_are_deterministic() {
        assert_eq!(derive_features(42, 32), derive_features(42, 32));
        assert_ne!(derive_features(42, 32), derive_features(43, 32));
        assert_eq!(derive_features(42, 32).0.len(), 32);
    }

    #[test]
    fn features_have_zero_mean() {
        let n = 10_000u64;
        let total: f64 = (0..n).flat_map(|s| derive_features(s, 32).0).sum();
        let mean = total / (n * 32) as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn zero_everything_encodes_to_zero() {
        let params = BackboneParams::zeros(tiny());
        let h = encode(&params, &SampleFeatures(vec![0.0; 4]), PromptKind::TwelveDim).unwrap();
        assert!(h.matrix.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn slot_counts() {
        let params = init_backbone(1, tiny());
        let x = derive_features(9, 4);
        let h12 = encode(&params, &x, PromptKind::TwelveDim).unwrap();
        let h1 = encode(&params, &x, PromptKind::Overall).unwrap();
        assert_eq!(h12.slot_count(), 12);
        assert_eq!(h1.slot_count(), 1);
        assert_eq!(h12.last_token(), h12.matrix.row(11));
    }

    #[test]
    fn slot_embeddings_act_slotwise() {
        let params = init_backbone(2, tiny());
        let x = derive_features(5, 4);
        let before = encode(&params, &x, PromptKind::TwelveDim).unwrap();
        let mut bumped = params.clone();
        bumped.slot_embeddings.row_mut(3)[1] += 0.5;
        let after = encode(&bumped, &x, PromptKind::TwelveDim).unwrap();
        for slot in 0..12 {
            let same = before.matrix.row(slot) == after.matrix.row(slot);
            assert_eq!(same, slot != 3, "slot {slot}");
        }
    }

    #[test]
    fn init_contract() {
        let dims = BackboneDims::default();
        let a = init_backbone(11, dims);
        assert_eq!(a, init_backbone(11, dims));
        assert_ne!(a, init_backbone(12, dims));
        assert!(a.dense1_bias.iter().chain(&a.dense2_bias).all(|&b| b == 0.0));
        let bound = linalg::glorot_bound(48, 64);
        assert!(a.dense1_weight.as_slice().iter().all(|w| w.abs() <= bound));
        let bound2 = linalg::glorot_bound(64, 64);
        assert!(a.dense2_weight.as_slice().iter().all(|w| w.abs() <= bound2));
    }

    #[test]
    fn shape_mismatch() {
        let params = init_backbone(1, tiny());
        let err = encode(&params, &SampleFeatures(vec![0.0; 3]), PromptKind::Overall).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }
}
