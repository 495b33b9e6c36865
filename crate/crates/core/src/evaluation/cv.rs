use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{classification_metrics, leakage_audit, AuditReport, EvalError, FoldArtifacts, FoldPlan};
use crate::features::{FeatureVector, Normalizer};
use crate::hybrid::{predict, train_hybrid, FusionMode, HybridConfig, HybridSample, Source};
use crate::label::ConfidenceLabel;
use crate::math::{mean, sample_std};
use crate::pseudo::{generate_pseudo_labels, train_labeller, Labeller, LabellerConfig, PseudoLabelConfig};

/// Named ablation configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Hybrid on ground truth only.
    GtOnly,
    /// Hybrid on ground truth plus every pool item's pseudo label.
    NoFilter,
    /// Hybrid on ground truth plus pseudo labels that pass `tau`.
    Proposed,
    /// Feature stream alone on the proposed data.
    FvOnly,
    /// Embedding stream alone on the proposed data.
    EmbeddingOnly,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::GtOnly, Arm::NoFilter, Arm::Proposed, Arm::FvOnly, Arm::EmbeddingOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::GtOnly => "gt_only",
            Arm::NoFilter => "no_filter",
            Arm::Proposed => "proposed",
            Arm::FvOnly => "fv_only",
            Arm::EmbeddingOnly => "embedding_only",
        }
    }

    pub fn uses_pseudo(self) -> bool {
        self != Arm::GtOnly
    }

    fn tau(self, configured: f64) -> f64 {
        if self == Arm::NoFilter { 0.0 } else { configured }
    }

    fn fusion(self) -> FusionMode {
        match self {
            Arm::FvOnly => FusionMode::FeatureOnly,
            Arm::EmbeddingOnly => FusionMode::EmbeddingOnly,
            _ => FusionMode::Both,
        }
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arm::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| alloc::format!("unknown arm `{s}`"))
    }
}

impl core::fmt::Display for Arm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A ground-truth clip with raw features and its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledItem {
    pub features: FeatureVector,
    pub embedding: Vec<f64>,
    pub label: ConfidenceLabel,
}

/// An unlabelled pool clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolItem {
    pub features: FeatureVector,
    pub embedding: Vec<f64>,
}

/// Stores indexed by clip id. Features are raw; each fold normalizes them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CvData {
    pub ground_truth: BTreeMap<String, LabelledItem>,
    pub pool: BTreeMap<String, PoolItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub labeller: LabellerConfig,
    pub pseudo: PseudoLabelConfig,
    pub hybrid: HybridConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { labeller: LabellerConfig::default(), pseudo: PseudoLabelConfig::default(), hybrid: HybridConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub arm: Arm,
    /// Low, medium, high.
    pub per_class_f1: [f64; 3],
    pub macro_f1: f64,
    pub confusion: [[f64; 3]; 3],
    pub n_pseudo_used: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub arm: Arm,
    pub folds: usize,
    pub macro_f1_mean: f64,
    /// Sample standard deviation (n - 1).
    pub macro_f1_std: f64,
    pub per_class_f1_mean: [f64; 3],
    pub per_class_f1_std: [f64; 3],
}

impl CvSummary {
    pub fn from_reports(arm: Arm, reports: &[FoldReport]) -> Self {
        let mine: Vec<&FoldReport> = reports.iter().filter(|r| r.arm == arm).collect();
        let macro_f1: Vec<f64> = mine.iter().map(|r| r.macro_f1).collect();
        let mut per_class_f1_mean = [0.0; 3];
        let mut per_class_f1_std = [0.0; 3];
        for c in 0..3 {
            let v: Vec<f64> = mine.iter().map(|r| r.per_class_f1[c]).collect();
            per_class_f1_mean[c] = mean(&v);
            per_class_f1_std[c] = sample_std(&v);
        }
        Self {
            arm,
            folds: mine.len(),
            macro_f1_mean: mean(&macro_f1),
            macro_f1_std: sample_std(&macro_f1),
            per_class_f1_mean,
            per_class_f1_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub reports: Vec<FoldReport>,
    pub summaries: Vec<CvSummary>,
    pub audit: AuditReport,
    /// Ids each stage consumed, per fold, so the audit can be re-run.
    pub artifacts: Vec<FoldArtifacts>,
}

fn normalize_all<'a>(norm: &Normalizer, items: impl Iterator<Item = (&'a String, &'a FeatureVector)>) -> Result<BTreeMap<String, FeatureVector>, EvalError> {
    items.map(|(id, fv)| Ok((id.clone(), norm.apply(fv)?))).collect()
}

/// Runs every fold for every arm. Per fold: fit the normalizer on the
/// training ids, train the labeller once (shared by arms that need pseudo
/// labels), build each arm's pseudo set, train the hybrid variant and score
/// the test ids. Summaries are only returned when the leakage audit passes.
pub fn run_cv(plan: &FoldPlan, data: &CvData, arms: &[Arm], cfg: &CvConfig) -> Result<CvOutcome, EvalError> {
    plan.verify()?;
    for id in plan.assignments.keys() {
        if !data.ground_truth.contains_key(id) {
            return Err(EvalError::MissingStore { store: "ground-truth", id: id.clone() });
        }
    }
    let all_gt = plan.all_ids();
    let mut reports = Vec::new();
    let mut artifacts = Vec::new();
    for fold in 0..plan.k {
        let test_ids = plan.test_ids(fold);
        let train_ids = plan.train_ids(fold);
        let gt = |id: &String| &data.ground_truth[id];
        let norm = Normalizer::fit(train_ids.iter().map(|id| &gt(id).features))?;
        let train_fv = normalize_all(&norm, train_ids.iter().map(|id| (id, &gt(id).features)))?;
        let test_fv = normalize_all(&norm, test_ids.iter().map(|id| (id, &gt(id).features)))?;
        let sample = |id: &String, fv: &FeatureVector, label, source| HybridSample {
            id: id.clone(),
            features: fv.clone(),
            embedding: match source {
                Source::GroundTruth => gt(id).embedding.clone(),
                Source::Pseudo => data.pool[id].embedding.clone(),
            },
            label,
            source,
        };
        let gt_train: Vec<HybridSample> =
            train_ids.iter().map(|id| sample(id, &train_fv[id], gt(id).label, Source::GroundTruth)).collect();
        let test: Vec<HybridSample> =
            test_ids.iter().map(|id| sample(id, &test_fv[id], gt(id).label, Source::GroundTruth)).collect();

        let mut fold_artifacts = FoldArtifacts {
            fold,
            normalizer_fit_ids: norm.fit_ids.iter().cloned().collect(),
            ..FoldArtifacts::default()
        };
        let mut labeller: Option<Labeller> = None;
        let mut pool_fv: Option<BTreeMap<String, FeatureVector>> = None;
        for &arm in arms {
            let mut pseudo = Vec::new();
            if arm.uses_pseudo() && !data.pool.is_empty() {
                if labeller.is_none() {
                    let fvs: Vec<FeatureVector> = gt_train.iter().map(|s| s.features.clone()).collect();
                    let labels: Vec<ConfidenceLabel> = gt_train.iter().map(|s| s.label).collect();
                    let lcfg = LabellerConfig { seed: cfg.labeller.seed.wrapping_add(fold as u64 * 7919), ..cfg.labeller.clone() };
                    let (l, _) = train_labeller(&fvs, &labels, &test_ids, &lcfg)?;
                    fold_artifacts.labeller_train_ids = l.train_ids.iter().cloned().collect();
                    labeller = Some(l);
                    pool_fv = Some(normalize_all(&norm, data.pool.iter().map(|(id, p)| (id, &p.features)))?);
                }
                let (l, pool_fv) = (labeller.as_ref().expect("trained above"), pool_fv.as_ref().expect("normalized above"));
                let pool: Vec<FeatureVector> = pool_fv.values().cloned().collect();
                let pcfg = PseudoLabelConfig { tau: arm.tau(cfg.pseudo.tau), ..cfg.pseudo };
                let set = generate_pseudo_labels(l, &pool, &all_gt, fold, &pcfg)?;
                fold_artifacts.pseudo_pool_ids = pool_fv.keys().cloned().collect();
                pseudo = set.samples.iter().map(|s| sample(&s.clip_id, &pool_fv[&s.clip_id], s.label, Source::Pseudo)).collect();
            }
            let hcfg = HybridConfig { mode: arm.fusion(), seed: cfg.hybrid.seed.wrapping_add(fold as u64 * 104_729), ..cfg.hybrid.clone() };
            let (model, _) = train_hybrid(&gt_train, &pseudo, &test_ids, &hcfg)?;
            fold_artifacts.hybrid_train_ids.extend(gt_train.iter().chain(&pseudo).map(|s| s.id.clone()));
            let pred = predict(&model, &test)?;
            let truth: Vec<ConfidenceLabel> = test.iter().map(|s| s.label).collect();
            let m = classification_metrics(&pred.labels, &truth)?;
            log::info!("fold {fold} {arm}: macro-F1 {:.3} with {} pseudo samples", m.macro_f1, pseudo.len());
            reports.push(FoldReport {
                fold,
                arm,
                per_class_f1: m.per_class_f1,
                macro_f1: m.macro_f1,
                confusion: m.confusion,
                n_pseudo_used: pseudo.len(),
                n_test: test.len(),
            });
        }
        artifacts.push(fold_artifacts);
    }
    let audit = leakage_audit(plan, &artifacts);
    if !audit.passed() {
        return Err(EvalError::AuditFailed(Box::new(audit)));
    }
    let distinct: BTreeSet<Arm> = arms.iter().copied().collect();
    let summaries = distinct.into_iter().map(|arm| CvSummary::from_reports(arm, &reports)).collect();
    Ok(CvOutcome { reports, summaries, audit, artifacts })
}
