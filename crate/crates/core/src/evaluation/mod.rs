//! Fold plans, leakage audits, classification metrics, cross-validation
//! arms and permutation importance.

mod audit;
mod cv;
mod importance;
mod plan;

#[cfg(test)]
mod tests;

use alloc::boxed::Box;
use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{leakage_audit, AuditCheck, AuditReport, AuditRule, FoldArtifacts, Violation};
pub use cv::{run_cv, Arm, CvConfig, CvData, CvOutcome, CvSummary, FoldReport, LabelledItem, PoolItem};
pub use importance::{permutation_importance, MIN_IMPORTANCE_SAMPLES};
pub use plan::{make_fold_plan, FoldPlan};

use crate::hybrid::HybridError;
use crate::label::ConfidenceLabel;
use crate::neural::NeuralError;
use crate::pseudo::{per_class_f1, PseudoError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("class `{class}` has {count} samples, fewer than k = {k}")]
    ClassTooSmall { class: ConfidenceLabel, count: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("fold plan checksum mismatch: stored {stored}, computed {computed}")]
    ChecksumMismatch { stored: String, computed: String },
    #[error("no {store} entry for `{id}`")]
    MissingStore { store: &'static str, id: String },
    #[error("predictions and labels differ in length or are empty")]
    EmptyInput,
    #[error("need at least {needed} samples and one repeat, got {samples} samples and {repeats} repeats")]
    TooFewSamples { samples: usize, repeats: usize, needed: usize },
    #[error("leakage audit failed with {} violation(s)", .0.violations.len())]
    AuditFailed(Box<AuditReport>),
    #[error(transparent)]
    Pseudo(#[from] PseudoError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

/// Per-class F1, their unweighted mean, and the confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    /// Low, medium, high.
    pub per_class_f1: [f64; 3],
    pub macro_f1: f64,
    /// Rows are true classes, normalized by their counts. A class absent
    /// from the labels has an all-zero row.
    pub confusion: [[f64; 3]; 3],
    pub counts: [[usize; 3]; 3],
}

/// F1 uses 0 when precision + recall has a zero denominator.
pub fn classification_metrics(preds: &[ConfidenceLabel], labels: &[ConfidenceLabel]) -> Result<ClassificationMetrics, EvalError> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(EvalError::EmptyInput);
    }
    let y: alloc::vec::Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let p: alloc::vec::Vec<usize> = preds.iter().map(|l| l.index()).collect();
    let per_class_f1 = per_class_f1(&y, &p);
    let mut counts = [[0usize; 3]; 3];
    for (&t, &q) in y.iter().zip(&p) {
        counts[t][q] += 1;
    }
    let mut confusion = [[0.0; 3]; 3];
    for (row, c) in confusion.iter_mut().zip(&counts) {
        let n: usize = c.iter().sum();
        if n > 0 {
            for (v, &k) in row.iter_mut().zip(c) {
                *v = k as f64 / n as f64;
            }
        }
    }
    Ok(ClassificationMetrics { macro_f1: per_class_f1.iter().sum::<f64>() / 3.0, per_class_f1, confusion, counts })
}
