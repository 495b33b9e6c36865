use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{NeuralError, Param};
use crate::math::{pow, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Weight decay is added to the gradient (L2).
    Adam,
    /// Weight decay shrinks parameters directly, outside the moment estimates.
    AdamW,
}

/// Adam / AdamW with bias correction. Moments are created on the first step
/// and must keep the same shapes afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Self { kind, lr, betas: (0.9, 0.999), eps: 1e-8, weight_decay, m: Vec::new(), v: Vec::new(), step: 0 }
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr, 0.0)
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self::new(OptimizerKind::AdamW, lr, weight_decay)
    }

    /// Applies one update using each parameter's accumulated `grad`.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<(), NeuralError> {
        if self.m.is_empty() && self.step == 0 {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if params.len() != self.m.len() {
            return Err(NeuralError::ShapeMismatch { index: params.len().min(self.m.len()), expected: self.m.len(), got: params.len() });
        }
        for (index, p) in params.iter().enumerate() {
            if p.value.len() != self.m[index].len() || p.grad.len() != p.value.len() {
                return Err(NeuralError::ShapeMismatch { index, expected: self.m[index].len(), got: p.grad.len() });
            }
        }
        self.step += 1;
        let (b1, b2) = self.betas;
        let bc1 = 1.0 - pow(b1, self.step as f64);
        let bc2 = 1.0 - pow(b2, self.step as f64);
        for (index, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[index];
            let v = &mut self.v[index];
            for k in 0..p.value.len() {
                let mut g = p.grad[k];
                match self.kind {
                    OptimizerKind::Adam => g += self.weight_decay * p.value[k],
                    OptimizerKind::AdamW => p.value[k] *= 1.0 - self.lr * self.weight_decay,
                }
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p.value[k] -= self.lr * m_hat / (sqrt(v_hat) + self.eps);
            }
        }
        Ok(())
    }
}
