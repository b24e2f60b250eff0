//! The stage-1 model (backbone plus three heads) and per-sample scoring.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{self, BackboneDims, BackboneParams, PromptKind, SampleFeatures};
use crate::datapipe::AnnotationType;
use crate::error::Result;
use crate::heads::{self, ExpertHeadParams, LmHeadParams, RegHeadParams};
use crate::taxonomy::{Dimension, DIMENSION_COUNT};

/// Named flat views over every trainable tensor of a parameter set.
///
/// Gradient buffers use the same type as the parameters, so an optimizer can
/// zip the two lists tensor by tensor.
pub trait Parameters {
    fn tensors(&self) -> Vec<(&'static str, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub expert_width: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        let b = BackboneDims::default();
        ModelDims { feature_dim: b.feature_dim, embed_dim: b.embed_dim, hidden_dim: b.hidden_dim, expert_width: 16 }
    }
}

impl ModelDims {
    pub fn backbone(&self) -> BackboneDims {
        BackboneDims { feature_dim: self.feature_dim, embed_dim: self.embed_dim, hidden_dim: self.hidden_dim }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub backbone: BackboneParams,
    pub lm_head: LmHeadParams,
    pub reg_head: RegHeadParams,
    pub expert_head: ExpertHeadParams,
}

impl ModelParams {
    pub fn init(seed: u64, dims: ModelDims) -> Self {
        let backbone = backbone::init_backbone(seed, dims.backbone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        ModelParams {
            backbone,
            lm_head: LmHeadParams::init(dims.hidden_dim, &mut rng),
            reg_head: RegHeadParams::init(dims.hidden_dim, &mut rng),
            expert_head: ExpertHeadParams::init(dims.hidden_dim, dims.expert_width, &mut rng),
        }
    }

    pub fn dims(&self) -> ModelDims {
        let b = self.backbone.dims();
        ModelDims {
            feature_dim: b.feature_dim,
            embed_dim: b.embed_dim,
            hidden_dim: b.hidden_dim,
            expert_width: self.expert_head.facial_ffn.hidden_bias.len(),
        }
    }
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = self.backbone.tensors();
        out.extend(self.lm_head.tensors());
        out.extend(self.reg_head.tensors());
        out.extend(self.expert_head.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = self.backbone.tensors_mut();
        out.extend(self.lm_head.tensors_mut());
        out.extend(self.reg_head.tensors_mut());
        out.extend(self.expert_head.tensors_mut());
        out
    }
}

/// Raw outputs of the three heads for one sample. LM scores are already
/// mapped from [1, 5] onto [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadScores {
    pub sample_id: String,
    /// Normalized LM score per dimension, read from the twelve-dimension prompt.
    pub lm_dims: [f64; DIMENSION_COUNT],
    /// Normalized LM overall score: the overall slot of the twelve-dimension
    /// prompt for `f = 1` samples, the single overall-prompt slot otherwise.
    pub lm_overall: f64,
    pub reg: f64,
    pub expert: [f64; DIMENSION_COUNT],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused: Option<f64>,
}

impl HeadScores {
    /// Fusion input `(S'_LM, S_reg, S_exp)`.
    pub fn voter_input(&self) -> [f64; 3] {
        [self.lm_overall, self.reg, self.expert[Dimension::OverallAesthetic.index()]]
    }
}

fn lm_scores(params: &ModelParams, h: &backbone::HiddenStates) -> Result<Vec<f64>> {
    let logits = heads::lm_logits(&params.lm_head, h)?;
    (0..logits.rows()).map(|k| heads::lm_score(logits.row(k)).and_then(heads::normalize_lm_score)).collect()
}

/// Runs both prompts through the model and collects every head's score.
pub fn score_sample(
    params: &ModelParams,
    sample_id: &str,
    features: &SampleFeatures,
    f: AnnotationType,
) -> Result<HeadScores> {
    let h_overall = backbone::encode(&params.backbone, features, PromptKind::Overall)?;
    let h_dims = backbone::encode(&params.backbone, features, PromptKind::TwelveDim)?;
    let lm_twelve = lm_scores(params, &h_dims)?;
    let mut lm_dims = [0.0; DIMENSION_COUNT];
    lm_dims.copy_from_slice(&lm_twelve);
    let lm_overall = match f {
        AnnotationType::TwelveDim => lm_dims[Dimension::OverallAesthetic.index()],
        AnnotationType::Overall => lm_scores(params, &h_overall)?[0],
    };
    Ok(HeadScores {
        sample_id: sample_id.into(),
        lm_dims,
        lm_overall,
        reg: heads::reg_score(&params.reg_head, &h_overall)?,
        expert: heads::expert_scores(&params.expert_head, &h_dims)?,
        fused: None,
    })
}
