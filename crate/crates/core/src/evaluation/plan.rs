use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;
use crate::label::ConfidenceLabel;
use crate::pseudo::hex;
use crate::split::stratified_assign;

/// A fixed stratified k-fold partition of the ground-truth ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
    pub seed: u64,
    pub created_at: String,
    /// SHA-256 (hex) of the canonical `id,fold\n` lines in id order.
    pub checksum: String,
}

impl FoldPlan {
    pub fn compute_checksum(assignments: &BTreeMap<String, usize>) -> String {
        let mut h = Sha256::new();
        for (id, fold) in assignments {
            h.update(id.as_bytes());
            h.update(b",");
            h.update(alloc::format!("{fold}\n").as_bytes());
        }
        hex(&h.finalize())
    }

    /// Fails if the assignments no longer match the stored checksum.
    pub fn verify(&self) -> Result<(), EvalError> {
        let computed = Self::compute_checksum(&self.assignments);
        if computed != self.checksum {
            return Err(EvalError::ChecksumMismatch { stored: self.checksum.clone(), computed });
        }
        Ok(())
    }

    pub fn test_ids(&self, fold: usize) -> BTreeSet<String> {
        self.assignments.iter().filter(|(_, &f)| f == fold).map(|(id, _)| id.clone()).collect()
    }

    pub fn train_ids(&self, fold: usize) -> BTreeSet<String> {
        self.assignments.iter().filter(|(_, &f)| f != fold).map(|(id, _)| id.clone()).collect()
    }

    pub fn all_ids(&self) -> BTreeSet<String> {
        self.assignments.keys().cloned().collect()
    }
}

/// Seeded stratified assignment: ids are taken in sorted order, shuffled
/// within each class and dealt round-robin over the folds.
pub fn make_fold_plan(
    labels: &BTreeMap<String, ConfidenceLabel>,
    k: usize,
    seed: u64,
    created_at: impl Into<String>,
) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    for class in ConfidenceLabel::ALL {
        let count = labels.values().filter(|&&l| l == class).count();
        if count > 0 && count < k {
            return Err(EvalError::ClassTooSmall { class, count, k });
        }
    }
    let ids: Vec<&String> = labels.keys().collect();
    let y: Vec<usize> = labels.values().map(|l| l.index()).collect();
    let folds = stratified_assign(&y, k, seed);
    let assignments: BTreeMap<String, usize> = ids.into_iter().cloned().zip(folds).collect();
    let checksum = FoldPlan::compute_checksum(&assignments);
    Ok(FoldPlan { k, assignments, seed, created_at: created_at.into(), checksum })
}
