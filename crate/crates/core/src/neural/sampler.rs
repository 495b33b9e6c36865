use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::rng::SeededRng;

/// Inverse-frequency sampling with replacement: sample `i` is drawn with
/// probability proportional to `1 / class_counts[label_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub class_counts: BTreeMap<usize, usize>,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn from_labels(labels: &[usize], seed: u64) -> Self {
        let mut class_counts = BTreeMap::new();
        for &y in labels {
            *class_counts.entry(y).or_insert(0) += 1;
        }
        Self { class_counts, seed }
    }

    /// Per-class sampling weight `1 / count`.
    pub fn class_weight(&self, class: usize) -> Result<f64, NeuralError> {
        match self.class_counts.get(&class) {
            Some(&c) if c > 0 => Ok(1.0 / c as f64),
            _ => Err(NeuralError::EmptyClass(class)),
        }
    }
}

/// Draws `n_draws` dataset indices i.i.d. with replacement.
pub fn weighted_sample(cfg: &SamplerConfig, labels: &[usize], n_draws: usize) -> Result<Vec<usize>, NeuralError> {
    if labels.is_empty() {
        return if n_draws == 0 { Ok(Vec::new()) } else { Err(NeuralError::EmptyTrainingSet) };
    }
    let mut cumulative = Vec::with_capacity(labels.len());
    let mut total = 0.0;
    for &y in labels {
        total += cfg.class_weight(y)?;
        cumulative.push(total);
    }
    let mut rng = SeededRng::new(cfg.seed);
    let last = labels.len() - 1;
    Ok((0..n_draws)
        .map(|_| {
            let u = rng.uniform() * total;
            cumulative.partition_point(|&c| c <= u).min(last)
        })
        .collect())
}
