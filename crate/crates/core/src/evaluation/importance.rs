use alloc::vec::Vec;

use super::EvalError;
use crate::features::FEATURE_DIM;
use crate::hybrid::{HybridModel, HybridSample};
use crate::neural::{macro_f1, Matrix};
use crate::rng::SeededRng;

pub const MIN_IMPORTANCE_SAMPLES: usize = 20;

/// Mean drop in macro-F1 when one feature-vector column is shuffled across
/// samples, for each of the 94 dimensions. Embeddings are left intact.
pub fn permutation_importance(model: &HybridModel, samples: &[HybridSample], n_repeats: usize, seed: u64) -> Result<Vec<f64>, EvalError> {
    if samples.len() < MIN_IMPORTANCE_SAMPLES || n_repeats == 0 {
        return Err(EvalError::TooFewSamples { samples: samples.len(), repeats: n_repeats, needed: MIN_IMPORTANCE_SAMPLES });
    }
    // Reuse predict's guards on normalization and embedding shape.
    crate::hybrid::predict(model, &samples[..1])?;
    let emb = Matrix::from_rows(&samples.iter().map(|s| s.embedding.clone()).collect::<Vec<_>>());
    let fv = Matrix::from_rows(&samples.iter().map(|s| s.features.values()).collect::<Vec<_>>());
    let labels: Vec<usize> = samples.iter().map(|s| s.label.index()).collect();
    let score = |fv: &Matrix| -> Result<f64, EvalError> {
        let out = model.infer(&emb, fv)?;
        Ok(macro_f1(&labels, &out.fused.argmax_rows(), 3))
    };
    let base = score(&fv)?;
    let mut importance = Vec::with_capacity(FEATURE_DIM);
    let mut shuffled = fv.clone();
    for j in 0..FEATURE_DIM {
        let mut drop = 0.0;
        for r in 0..n_repeats {
            let perm = SeededRng::derived(seed, (j * n_repeats + r) as u64).permutation(samples.len());
            for (i, &src) in perm.iter().enumerate() {
                shuffled.set(i, j, fv.get(src, j));
            }
            drop += base - score(&shuffled)?;
        }
        for i in 0..samples.len() {
            shuffled.set(i, j, fv.get(i, j));
        }
        importance.push(drop / n_repeats as f64);
    }
    Ok(importance)
}
