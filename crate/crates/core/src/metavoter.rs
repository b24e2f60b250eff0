//! Stage-2 score fusion.
//!
//! `y = dense3(relu(bn2(dense2(relu(bn1(dense1([S'_LM, S_reg, S_exp])))))))`,
//! trained with mean absolute error on the overall ground truth. Only the
//! three head scores enter, so nothing upstream can receive gradient.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::Parameters;
use crate::optim::{Optimizer, OptimizerKind};

pub const VOTER_INPUTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoterConfig {
    pub width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub eps: f64,
}

impl Default for VoterConfig {
    fn default() -> Self {
        VoterConfig {
            width: 16,
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// Batch normalization over one hidden layer. `running_var` tracks the
/// unbiased batch variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaVoterParams {
    pub dense1_weight: Matrix,
    pub dense1_bias: Vec<f64>,
    pub bn1: BatchNorm,
    pub dense2_weight: Matrix,
    pub dense2_bias: Vec<f64>,
    pub bn2: BatchNorm,
    pub dense3_weight: Vec<f64>,
    pub dense3_bias: f64,
    pub momentum: f64,
    pub eps: f64,
}

impl MetaVoterParams {
    pub fn init(config: &VoterConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.width;
        MetaVoterParams {
            dense1_weight: Matrix::glorot(h, VOTER_INPUTS, &mut rng),
            dense1_bias: vec![0.0; h],
            bn1: BatchNorm::new(h),
            dense2_weight: Matrix::glorot(h, h, &mut rng),
            dense2_bias: vec![0.0; h],
            bn2: BatchNorm::new(h),
            dense3_weight: Matrix::glorot(1, h, &mut rng).as_slice().to_vec(),
            dense3_bias: 0.0,
            momentum: config.momentum,
            eps: config.eps,
        }
    }

    /// Every entry zero, including batch-norm scales and running statistics.
    pub fn zeros(width: usize) -> Self {
        let bn = BatchNorm {
            gamma: vec![0.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![0.0; width],
        };
        MetaVoterParams {
            dense1_weight: Matrix::zeros(width, VOTER_INPUTS),
            dense1_bias: vec![0.0; width],
            bn1: bn.clone(),
            dense2_weight: Matrix::zeros(width, width),
            dense2_bias: vec![0.0; width],
            bn2: bn,
            dense3_weight: vec![0.0; width],
            dense3_bias: 0.0,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn width(&self) -> usize {
        self.dense1_bias.len()
    }

    /// Inference with running statistics; never mutates.
    pub fn forward_eval(&self, input: [f64; VOTER_INPUTS]) -> Result<f64> {
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let bn_eval = |z: Vec<f64>, bn: &BatchNorm| -> Vec<f64> {
            z.iter()
                .enumerate()
                .map(|(j, v)| {
                    let xhat = (v - bn.running_mean[j]) / libm::sqrt(bn.running_var[j] + self.eps);
                    (bn.gamma[j] * xhat + bn.beta[j]).max(0.0)
                })
                .collect()
        };
        let a1 = bn_eval(linalg::affine(&self.dense1_weight, &input, &self.dense1_bias), &self.bn1);
        let a2 = bn_eval(linalg::affine(&self.dense2_weight, &a1, &self.dense2_bias), &self.bn2);
        Ok(linalg::dot(&self.dense3_weight, &a2) + self.dense3_bias)
    }

    /// Train-mode forward over a batch: normalizes with batch statistics and
    /// folds them into the running statistics.
    pub fn forward_train(&mut self, batch: &[[f64; VOTER_INPUTS]]) -> Result<Vec<f64>> {
        let pass = self.train_pass(batch)?;
        self.update_running(&pass);
        Ok(pass.outputs)
    }

    fn update_running(&mut self, pass: &TrainPass) {
        let m = self.momentum;
        for (bn, layer) in [(&mut self.bn1, &pass.layer1), (&mut self.bn2, &pass.layer2)] {
            for j in 0..bn.gamma.len() {
                bn.running_mean[j] = (1.0 - m) * bn.running_mean[j] + m * layer.mean[j];
                bn.running_var[j] = (1.0 - m) * bn.running_var[j] + m * layer.unbiased_var[j];
            }
        }
    }

    fn train_pass(&self, batch: &[[f64; VOTER_INPUTS]]) -> Result<TrainPass> {
        if batch.len() < 2 {
            return Err(Error::BatchTooSmall(batch.len()));
        }
        if batch.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let inputs: Vec<Vec<f64>> = batch.iter().map(|x| x.to_vec()).collect();
        let z1: Vec<Vec<f64>> =
            inputs.iter().map(|x| linalg::affine(&self.dense1_weight, x, &self.dense1_bias)).collect();
        let layer1 = BnLayer::forward(z1, &self.bn1, self.eps);
        let z2: Vec<Vec<f64>> =
            layer1.act.iter().map(|a| linalg::affine(&self.dense2_weight, a, &self.dense2_bias)).collect();
        let layer2 = BnLayer::forward(z2, &self.bn2, self.eps);
        let outputs = layer2.act.iter().map(|a| linalg::dot(&self.dense3_weight, a) + self.dense3_bias).collect();
        Ok(TrainPass { inputs, layer1, layer2, outputs })
    }
}

/// Batch statistics and activations of one `dense → bn → relu` block.
#[derive(Debug, Clone)]
struct BnLayer {
    mean: Vec<f64>,
    var: Vec<f64>,
    unbiased_var: Vec<f64>,
    xhat: Vec<Vec<f64>>,
    pre_relu: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
}

impl BnLayer {
    fn forward(z: Vec<Vec<f64>>, bn: &BatchNorm, eps: f64) -> Self {
        let n = z.len() as f64;
        let width = bn.gamma.len();
        let mut mean = vec![0.0; width];
        for row in &z {
            linalg::add_assign(&mut mean, row);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for row in &z {
            for j in 0..width {
                var[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
            }
        }
        let unbiased_var = var.iter().map(|v| v / (n - 1.0)).collect();
        var.iter_mut().for_each(|v| *v /= n);
        let xhat: Vec<Vec<f64>> =
            z.iter().map(|row| (0..width).map(|j| (row[j] - mean[j]) / libm::sqrt(var[j] + eps)).collect()).collect();
        let pre_relu: Vec<Vec<f64>> =
            xhat.iter().map(|xh| (0..width).map(|j| bn.gamma[j] * xh[j] + bn.beta[j]).collect()).collect();
        let act = pre_relu.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect();
        BnLayer { mean, var, unbiased_var, xhat, pre_relu, act }
    }

    /// From `∂L/∂act` to `∂L/∂z`, accumulating `γ` and `β` gradients.
    fn backward(&self, d_act: &[Vec<f64>], bn: &BatchNorm, eps: f64, grads: &mut BatchNorm) -> Vec<Vec<f64>> {
        let n = d_act.len();
        let width = bn.gamma.len();
        let mut d_z = vec![vec![0.0; width]; n];
        for j in 0..width {
            let d_xhat: Vec<f64> = (0..n)
                .map(|i| {
                    let d_pre = if self.pre_relu[i][j] > 0.0 { d_act[i][j] } else { 0.0 };
                    grads.gamma[j] += d_pre * self.xhat[i][j];
                    grads.beta[j] += d_pre;
                    d_pre * bn.gamma[j]
                })
                .collect();
            let sum_d: f64 = d_xhat.iter().sum();
            let sum_dx: f64 = d_xhat.iter().zip(&self.xhat).map(|(d, xh)| d * xh[j]).sum();
            let inv_std = 1.0 / libm::sqrt(self.var[j] + eps);
            for i in 0..n {
                d_z[i][j] = inv_std / n as f64 * (n as f64 * d_xhat[i] - sum_d - self.xhat[i][j] * sum_dx);
            }
        }
        d_z
    }
}

#[derive(Debug, Clone)]
struct TrainPass {
    inputs: Vec<Vec<f64>>,
    layer1: BnLayer,
    layer2: BnLayer,
    outputs: Vec<f64>,
}

impl Parameters for MetaVoterParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("metavoter.dense1_weight", self.dense1_weight.as_slice()),
            ("metavoter.dense1_bias", &self.dense1_bias),
            ("metavoter.bn1_gamma", &self.bn1.gamma),
            ("metavoter.bn1_beta", &self.bn1.beta),
            ("metavoter.dense2_weight", self.dense2_weight.as_slice()),
            ("metavoter.dense2_bias", &self.dense2_bias),
            ("metavoter.bn2_gamma", &self.bn2.gamma),
            ("metavoter.bn2_beta", &self.bn2.beta),
            ("metavoter.dense3_weight", &self.dense3_weight),
            ("metavoter.dense3_bias", core::slice::from_ref(&self.dense3_bias)),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("metavoter.dense1_weight", self.dense1_weight.as_mut_slice()),
            ("metavoter.dense1_bias", &mut self.dense1_bias),
            ("metavoter.bn1_gamma", &mut self.bn1.gamma),
            ("metavoter.bn1_beta", &mut self.bn1.beta),
            ("metavoter.dense2_weight", self.dense2_weight.as_mut_slice()),
            ("metavoter.dense2_bias", &mut self.dense2_bias),
            ("metavoter.bn2_gamma", &mut self.bn2.gamma),
            ("metavoter.bn2_beta", &mut self.bn2.beta),
            ("metavoter.dense3_weight", &mut self.dense3_weight),
            ("metavoter.dense3_bias", core::slice::from_mut(&mut self.dense3_bias)),
        ]
    }
}

/// Mean absolute error; the subgradient at a zero residual is 0.
pub fn mae_loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: target.len() });
    }
    if predicted.is_empty() {
        return Err(Error::Empty);
    }
    Ok(predicted.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / predicted.len() as f64)
}

/// Train-mode MAE over one batch and its gradient with respect to the
/// trainable tensors. Running statistics are left untouched.
pub fn batch_mae_and_gradient(
    params: &MetaVoterParams,
    batch: &[[f64; VOTER_INPUTS]],
    targets: &[f64],
) -> Result<(f64, MetaVoterParams)> {
    if batch.len() != targets.len() {
        return Err(Error::LengthMismatch { left: batch.len(), right: targets.len() });
    }
    let pass = params.train_pass(batch)?;
    let loss = mae_loss(&pass.outputs, targets)?;
    let n = batch.len();
    let mut grads = params.zeroed();

    let d_out: Vec<f64> = pass
        .outputs
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let r = p - t;
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            sign / n as f64
        })
        .collect();

    let mut d_act2 = vec![vec![0.0; params.width()]; n];
    for i in 0..n {
        linalg::axpy(d_out[i], &pass.layer2.act[i], &mut grads.dense3_weight);
        grads.dense3_bias += d_out[i];
        linalg::axpy(d_out[i], &params.dense3_weight, &mut d_act2[i]);
    }
    let d_z2 = pass.layer2.backward(&d_act2, &params.bn2, params.eps, &mut grads.bn2);
    let mut d_act1 = vec![vec![0.0; params.width()]; n];
    for i in 0..n {
        grads.dense2_weight.add_outer(&d_z2[i], &pass.layer1.act[i]);
        linalg::add_assign(&mut grads.dense2_bias, &d_z2[i]);
        params.dense2_weight.add_matvec_t(&d_z2[i], &mut d_act1[i]);
    }
    let d_z1 = pass.layer1.backward(&d_act1, &params.bn1, params.eps, &mut grads.bn1);
    for (d, input) in d_z1.iter().zip(&pass.inputs) {
        grads.dense1_weight.add_outer(d, input);
        linalg::add_assign(&mut grads.dense1_bias, d);
    }
    Ok((loss, grads))
}

/// Train-mode MAE of one batch, without touching running statistics.
pub fn batch_mae(params: &MetaVoterParams, batch: &[[f64; VOTER_INPUTS]], targets: &[f64]) -> Result<f64> {
    mae_loss(&params.train_pass(batch)?.outputs, targets)
}

/// Fits the voter on `(S'_LM, S_reg, S_exp)` triples. After the last epoch
/// the running statistics are replaced by full-data statistics under the
/// final weights.
pub fn train_metavoter(
    head_scores: &[[f64; VOTER_INPUTS]],
    targets: &[f64],
    config: &VoterConfig,
) -> Result<MetaVoterParams> {
    if head_scores.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if head_scores.len() != targets.len() {
        return Err(Error::LengthMismatch { left: head_scores.len(), right: targets.len() });
    }
    if head_scores.len() < 2 {
        return Err(Error::BatchTooSmall(head_scores.len()));
    }
    if config.width == 0 || config.epochs == 0 || config.batch_size < 2 {
        return Err(Error::Config("voter width, epochs must be positive and batch_size >= 2".into()));
    }
    let mut params = MetaVoterParams::init(config);
    // start from the best constant predictor under MAE
    params.dense3_bias = median(targets);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x564f_5445_5253_3200);
    let mut order: Vec<usize> = (0..head_scores.len()).collect();
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in batches(&order, config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| head_scores[i]).collect();
            let t: Vec<_> = chunk.iter().map(|&i| targets[i]).collect();
            let pass = params.train_pass(&batch)?;
            params.update_running(&pass);
            let (loss, grads) = batch_mae_and_gradient(&params, &batch, &t)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            optimizer.step(&mut params, &grads);
            step += 1;
        }
    }
    finalize_running_stats(&mut params, head_scores)?;
    Ok(params)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}

/// Chunks of `size`, with a trailing singleton folded into the previous chunk
/// so every train-mode batch has at least two samples.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out[out.len() - 1].len() == 1 {
        let start = (out.len() - 2) * size;
        out.pop();
        out.pop();
        out.push(&order[start..]);
    }
    out
}

fn finalize_running_stats(params: &mut MetaVoterParams, data: &[[f64; VOTER_INPUTS]]) -> Result<()> {
    let pass = params.train_pass(data)?;
    params.bn1.running_mean = pass.layer1.mean;
    params.bn1.running_var = pass.layer1.unbiased_var;
    params.bn2.running_mean = pass.layer2.mean;
    params.bn2.running_var = pass.layer2.unbiased_var;
    Ok(())
}
