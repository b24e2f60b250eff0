//! Stage-1 joint training of the backbone and the three heads.
//!
//! Per sample the loss is cross-entropy over the answer slots plus one
//! head-specific MSE term chosen by the annotation flag:
//!
//! * `f = 0`: `CE(1 slot) + λ · MSE([S_reg], [overall])`
//! * `f = 1`: `CE(12 slots) + μ · MSE(expert scores, 12 targets)`
//!
//! The branch not taken is never evaluated, so its head receives exactly zero
//! gradient. Gradients are accumulated by hand along the fixed graph.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{self, derive_features, PromptKind, SampleFeatures};
use crate::datapipe::{AnnotationType, ScoredSample};
use crate::error::{Error, Result};
use crate::heads::{self, LEVEL_COUNT};
use crate::linalg::{self, Matrix};
use crate::metavoter::MetaVoterParams;
use crate::model::{ModelDims, ModelParams};
use crate::optim::{Optimizer, OptimizerKind};
use crate::taxonomy::{RatingLevel, DIMENSION_COUNT};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub lambda: f64,
    pub mu: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub dims: ModelDims,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            lambda: 1.0,
            mu: 1.0,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 1,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            dims: ModelDims::default(),
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        // zero is allowed: it turns training into a no-op
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.mu >= 0.0) {
            return bad("lambda and mu must be non-negative");
        }
        let d = self.dims;
        if d.feature_dim == 0 || d.embed_dim == 0 || d.hidden_dim == 0 || d.expert_width == 0 {
            return bad("model sizes must be positive");
        }
        Ok(())
    }
}

/// Trained parameters plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub config: Stage1Config,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    #[serde(flatten)]
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metavoter: Option<MetaVoterParams>,
}

/// Mean over slots of `-log softmax(logits_k)[target_k]`.
pub fn cross_entropy_loss(logits: &Matrix, targets: &[RatingLevel]) -> Result<f64> {
    if logits.rows() != targets.len() {
        return Err(Error::LengthMismatch { left: logits.rows(), right: targets.len() });
    }
    if targets.is_empty() {
        return Err(Error::Empty);
    }
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let row = logits.row(k);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_total = libm::log(row.iter().map(|l| libm::exp(l - max)).sum::<f64>());
            log_total - (row[usize::from(z.code()) - 1] - max)
        })
        .sum();
    Ok(total / targets.len() as f64)
}

pub fn mse_loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: target.len() });
    }
    if predicted.is_empty() {
        return Err(Error::Empty);
    }
    let sum: f64 = predicted.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / predicted.len() as f64)
}

/// Head outputs for the branch selected by a sample's flag.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchOutputs {
    Overall { logits: Matrix, reg: f64 },
    TwelveDim { logits: Matrix, expert: [f64; DIMENSION_COUNT] },
}

pub fn stage1_loss(sample: &ScoredSample, outputs: &BranchOutputs, config: &Stage1Config) -> Result<f64> {
    match (sample.f, outputs) {
        (AnnotationType::Overall, BranchOutputs::Overall { logits, reg }) => {
            let ce = cross_entropy_loss(logits, &sample.target_levels())?;
            Ok(ce + config.lambda * mse_loss(&[*reg], &[sample.overall()])?)
        }
        (AnnotationType::TwelveDim, BranchOutputs::TwelveDim { logits, expert }) => {
            let ce = cross_entropy_loss(logits, &sample.target_levels())?;
            Ok(ce + config.mu * mse_loss(expert, &sample.target_scores())?)
        }
        (f, _) => Err(Error::WrongPromptKind {
            expected: f.slot_count(),
            found: match outputs {
                BranchOutputs::Overall { .. } => 1,
                BranchOutputs::TwelveDim { .. } => DIMENSION_COUNT,
            },
        }),
    }
}

pub fn prompt_for(f: AnnotationType) -> PromptKind {
    match f {
        AnnotationType::Overall => PromptKind::Overall,
        AnnotationType::TwelveDim => PromptKind::TwelveDim,
    }
}

/// Forward pass for the sample's branch.
pub fn forward_branch(params: &ModelParams, features: &SampleFeatures, f: AnnotationType) -> Result<BranchOutputs> {
    let h = backbone::encode(&params.backbone, features, prompt_for(f))?;
    let logits = heads::lm_logits(&params.lm_head, &h)?;
    Ok(match f {
        AnnotationType::Overall => BranchOutputs::Overall { logits, reg: heads::reg_score(&params.reg_head, &h)? },
        AnnotationType::TwelveDim => {
            BranchOutputs::TwelveDim { logits, expert: heads::expert_scores(&params.expert_head, &h)? }
        }
    })
}

/// Loss of one sample; adds `scale · ∂loss/∂θ` into `grads`.
pub fn accumulate_sample_gradient(
    params: &ModelParams,
    features: &SampleFeatures,
    sample: &ScoredSample,
    config: &Stage1Config,
    scale: f64,
    grads: &mut ModelParams,
) -> Result<f64> {
    let (h, cache) = backbone::encode_cached(&params.backbone, features, prompt_for(sample.f))?;
    let logits = heads::lm_logits(&params.lm_head, &h)?;
    let levels = sample.target_levels();
    let slots = h.slot_count();
    let hidden = h.matrix.cols();

    // cross-entropy: ∂/∂logits = (softmax - onehot) / slots
    let mut d_h = Matrix::zeros(slots, hidden);
    let ce_scale = scale / slots as f64;
    for (k, z) in levels.iter().enumerate() {
        let mut d_logits = heads::softmax(logits.row(k));
        d_logits[usize::from(z.code()) - 1] -= 1.0;
        d_logits.iter_mut().for_each(|g| *g *= ce_scale);
        grads.lm_head.weight.add_outer(&d_logits, h.matrix.row(k));
        linalg::add_assign(&mut grads.lm_head.bias, &d_logits);
        params.lm_head.weight.add_matvec_t(&d_logits, d_h.row_mut(k));
    }
    debug_assert_eq!(grads.lm_head.bias.len(), LEVEL_COUNT);

    let outputs = match sample.f {
        AnnotationType::Overall => {
            let reg = heads::reg_score(&params.reg_head, &h)?;
            let d_reg = scale * config.lambda * 2.0 * (reg - sample.overall());
            linalg::axpy(d_reg, h.last_token(), &mut grads.reg_head.weight);
            grads.reg_head.bias += d_reg;
            linalg::axpy(d_reg, &params.reg_head.weight, d_h.row_mut(slots - 1));
            BranchOutputs::Overall { logits, reg }
        }
        AnnotationType::TwelveDim => {
            let (expert, ecache) = heads::expert_scores_cached(&params.expert_head, &h)?;
            let targets = sample.target_scores();
            let factor = scale * config.mu * 2.0 / DIMENSION_COUNT as f64;
            let mut d_scores = [0.0; DIMENSION_COUNT];
            for i in 0..DIMENSION_COUNT {
                d_scores[i] = factor * (expert[i] - targets[i]);
            }
            let d_from_expert = heads::expert_backward(&params.expert_head, &ecache, &d_scores, &mut grads.expert_head);
            linalg::add_assign(d_h.as_mut_slice(), d_from_expert.as_slice());
            BranchOutputs::TwelveDim { logits, expert }
        }
    };
    backbone::backward(&params.backbone, &cache, &d_h, &mut grads.backbone);
    stage1_loss(sample, &outputs, config)
}

/// Mean stage-1 loss over a batch and its gradient. Samples are reduced in
/// batch order so the result is bit-reproducible.
pub fn batch_loss_and_gradient(
    params: &ModelParams,
    batch: &[(&SampleFeatures, &ScoredSample)],
    config: &Stage1Config,
) -> Result<(f64, ModelParams)> {
    use crate::model::Parameters;
    if batch.is_empty() {
        return Err(Error::Empty);
    }
    let mut grads = params.zeroed();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (x, s) in batch {
        loss += accumulate_sample_gradient(params, x, s, config, scale, &mut grads)?;
    }
    Ok((loss * scale, grads))
}

pub fn batch_loss(
    params: &ModelParams,
    batch: &[(&SampleFeatures, &ScoredSample)],
    config: &Stage1Config,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty);
    }
    let mut total = 0.0;
    for (x, s) in batch {
        total += stage1_loss(s, &forward_branch(params, x, s.f)?, config)?;
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

pub fn train_stage1(train: &[ScoredSample], config: &Stage1Config) -> Result<ModelCheckpoint> {
    let init = ModelParams::init(config.seed, config.dims);
    train_stage1_from(train, config, init, |_| {})
}

/// Trains from the given initial parameters, reporting every optimizer step.
pub fn train_stage1_from(
    train: &[ScoredSample],
    config: &Stage1Config,
    init: ModelParams,
    mut on_step: impl FnMut(StepInfo),
) -> Result<ModelCheckpoint> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if init.dims() != config.dims {
        return Err(Error::Config("initial parameters do not match configured sizes".into()));
    }
    let features: Vec<SampleFeatures> =
        train.iter().map(|s| derive_features(s.feature_seed, config.dims.feature_dim)).collect();
    let mut params = init;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546_464c_4531);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| (&features[i], &train[i])).collect();
            let (loss, grads) = batch_loss_and_gradient(&params, &batch, config)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            optimizer.step(&mut params, &grads);
            on_step(StepInfo { epoch, step, loss });
            step += 1;
        }
    }
    Ok(ModelCheckpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: config.clone(),
        provenance: BTreeMap::new(),
        model: params,
        metavoter: None,
    })
}
