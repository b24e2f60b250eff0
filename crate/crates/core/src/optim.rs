//! First-order optimizers over [`Parameters`] tensors.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: i32,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Optimizer { kind, learning_rate, step: 0, first_moment: Vec::new(), second_moment: Vec::new() }
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        let lr = self.learning_rate;
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        debug_assert_eq!(grads.len(), params.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for ((_, p), (_, g)) in params.iter_mut().zip(&grads) {
                    for (pi, gi) in p.iter_mut().zip(g.iter()) {
                        *pi -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first_moment.is_empty() {
                    self.first_moment = grads.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
                    self.second_moment = self.first_moment.clone();
                }
                self.step += 1;
                let c1 = 1.0 - libm::pow(ADAM_BETA1, f64::from(self.step));
                let c2 = 1.0 - libm::pow(ADAM_BETA2, f64::from(self.step));
                let moments = self.first_moment.iter_mut().zip(self.second_moment.iter_mut());
                for (((_, p), (_, g)), (m, v)) in params.iter_mut().zip(&grads).zip(moments) {
                    for i in 0..p.len() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
                    }
                }
            }
        }
    }
}
