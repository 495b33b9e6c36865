use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::math::{cos, PI};

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn new(lr_max: f64, total_steps: usize) -> Self {
        Self { lr_max, lr_min: 0.0, total_steps }
    }

    pub fn lr(&self, step: usize) -> Result<f64, NeuralError> {
        if step > self.total_steps {
            return Err(NeuralError::StepOutOfRange { step, total: self.total_steps });
        }
        if self.total_steps == 0 {
            return Ok(self.lr_max);
        }
        let t = step as f64 / self.total_steps as f64;
        Ok(self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + cos(PI * t)))
    }
}
