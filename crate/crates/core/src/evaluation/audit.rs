use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::FoldPlan;

/// Ids each pipeline stage consumed for one fold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldArtifacts {
    pub fold: usize,
    pub labeller_train_ids: BTreeSet<String>,
    pub hybrid_train_ids: BTreeSet<String>,
    pub pseudo_pool_ids: BTreeSet<String>,
    pub normalizer_fit_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditRule {
    /// Test ids never reach the labeller.
    LabellerTrainDisjointFromTest,
    /// Test ids never reach the hybrid model.
    HybridTrainDisjointFromTest,
    /// The unlabelled pool excludes every ground-truth id.
    PoolExcludesGroundTruth,
    /// The normalizer is fitted on the fold's training partition only.
    NormalizerFitOnTrainOnly,
}

impl AuditRule {
    pub const ALL: [AuditRule; 4] = [
        AuditRule::LabellerTrainDisjointFromTest,
        AuditRule::HybridTrainDisjointFromTest,
        AuditRule::PoolExcludesGroundTruth,
        AuditRule::NormalizerFitOnTrainOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AuditRule::LabellerTrainDisjointFromTest => "labeller_train_disjoint_from_test",
            AuditRule::HybridTrainDisjointFromTest => "hybrid_train_disjoint_from_test",
            AuditRule::PoolExcludesGroundTruth => "pool_excludes_ground_truth",
            AuditRule::NormalizerFitOnTrainOnly => "normalizer_fit_on_train_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub fold: usize,
    pub rule: AuditRule,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub fold: usize,
    pub rule: AuditRule,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: AuditReport) {
        self.checks.extend(other.checks);
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "fold {} {:<36} {}", c.fold, c.rule.as_str(), if c.passed { "PASS" } else { "FAIL" })?;
        }
        for v in &self.violations {
            writeln!(f, "violation: fold {} {} id `{}`", v.fold, v.rule.as_str(), v.id)?;
        }
        Ok(())
    }
}

/// Runs the four leakage checks for every fold in `artifacts`.
pub fn leakage_audit(plan: &FoldPlan, artifacts: &[FoldArtifacts]) -> AuditReport {
    let all_gt = plan.all_ids();
    let mut report = AuditReport::default();
    for a in artifacts {
        let test = plan.test_ids(a.fold);
        let train = plan.train_ids(a.fold);
        let found: [Vec<&String>; 4] = [
            a.labeller_train_ids.intersection(&test).collect(),
            a.hybrid_train_ids.intersection(&test).collect(),
            a.pseudo_pool_ids.intersection(&all_gt).collect(),
            a.normalizer_fit_ids.difference(&train).collect(),
        ];
        for (rule, ids) in AuditRule::ALL.into_iter().zip(found) {
            report.checks.push(AuditCheck { fold: a.fold, rule, passed: ids.is_empty() });
            report.violations.extend(ids.into_iter().map(|id| Violation { fold: a.fold, rule, id: id.clone() }));
        }
    }
    report
}
