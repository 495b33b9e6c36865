use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::*;
use crate::features::Normalizer;
use crate::hybrid::{train_hybrid, FusionMode, HybridConfig, HybridSample, Source};
use crate::label::ConfidenceLabel::{self, High, Low, Medium};
use crate::rng::SeededRng;
use crate::synthetic::{corpus, CorpusSpec};

pub(crate) fn cv_data(gt: &CorpusSpec, pool: Option<&CorpusSpec>) -> CvData {
    let g = corpus(gt);
    let mut data = CvData::default();
    for i in 0..g.labels.len() {
        data.ground_truth.insert(
            g.features[i].id.clone(),
            LabelledItem { features: g.features[i].clone(), embedding: g.embeddings[i].clone(), label: g.labels[i] },
        );
    }
    if let Some(p) = pool {
        let p = corpus(p);
        for i in 0..p.labels.len() {
            data.pool.insert(p.features[i].id.clone(), PoolItem { features: p.features[i].clone(), embedding: p.embeddings[i].clone() });
        }
    }
    data
}

pub(crate) fn plan_for(data: &CvData, k: usize, seed: u64) -> FoldPlan {
    let labels: BTreeMap<String, ConfidenceLabel> = data.ground_truth.iter().map(|(id, it)| (id.clone(), it.label)).collect();
    make_fold_plan(&labels, k, seed, "2026-01-01T00:00:00Z").unwrap()
}

fn labels_with_counts(counts: [usize; 3]) -> BTreeMap<String, ConfidenceLabel> {
    let mut out = BTreeMap::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            out.insert(format!("clip{c}_{i:03}"), ConfidenceLabel::from_index(c).unwrap());
        }
    }
    out
}

fn wired_artifacts(plan: &FoldPlan, pool: &BTreeSet<String>) -> Vec<FoldArtifacts> {
    (0..plan.k)
        .map(|fold| FoldArtifacts {
            fold,
            labeller_train_ids: plan.train_ids(fold),
            hybrid_train_ids: plan.train_ids(fold),
            pseudo_pool_ids: pool.clone(),
            normalizer_fit_ids: plan.train_ids(fold),
        })
        .collect()
}

#[test]
fn fold_plan_splits_90_210_300_into_18_42_60() {
    let labels = labels_with_counts([90, 210, 300]);
    let plan = make_fold_plan(&labels, 5, 7, "t0").unwrap();
    assert_eq!(plan.assignments.len(), 600);
    for fold in 0..5 {
        let test = plan.test_ids(fold);
        let mut counts = [0; 3];
        for id in &test {
            counts[labels[id].index()] += 1;
        }
        assert_eq!(counts, [18, 42, 60], "fold {fold}");
        assert_eq!(plan.train_ids(fold).len(), 480);
    }
}

#[test]
fn fold_plan_checksum_is_stable_and_seed_dependent() {
    let labels = labels_with_counts([90, 210, 300]);
    let a = make_fold_plan(&labels, 5, 7, "t0").unwrap();
    let b = make_fold_plan(&labels, 5, 7, "t1").unwrap();
    let c = make_fold_plan(&labels, 5, 8, "t0").unwrap();
    assert_eq!(a.checksum, b.checksum);
    assert_eq!(a.assignments, b.assignments);
    assert_ne!(a.checksum, c.checksum);
    assert_eq!(a.checksum.len(), 64);
    a.verify().unwrap();
}

#[test]
fn five_samples_of_one_class_land_one_per_fold() {
    let plan = make_fold_plan(&labels_with_counts([0, 5, 0]), 5, 3, "t").unwrap();
    for fold in 0..5 {
        assert_eq!(plan.test_ids(fold).len(), 1);
    }
}

#[test]
fn fold_plan_rejects_small_classes_and_bad_k() {
    let err = make_fold_plan(&labels_with_counts([4, 10, 10]), 5, 0, "t").unwrap_err();
    assert_eq!(err, EvalError::ClassTooSmall { class: Low, count: 4, k: 5 });
    assert_eq!(make_fold_plan(&labels_with_counts([4, 4, 4]), 1, 0, "t").unwrap_err(), EvalError::InvalidK(1));
}

#[test]
fn mutated_plan_fails_verification() {
    let mut plan = make_fold_plan(&labels_with_counts([10, 10, 10]), 5, 0, "t").unwrap();
    let id = plan.assignments.keys().next().unwrap().clone();
    let fold = plan.assignments[&id];
    plan.assignments.insert(id, (fold + 1) % 5);
    assert!(matches!(plan.verify(), Err(EvalError::ChecksumMismatch { .. })));
}

#[test]
fn run_cv_refuses_a_mutated_plan() {
    let data = cv_data(&CorpusSpec { n_per_class: [5, 5, 5], ..CorpusSpec::default() }, None);
    let mut plan = plan_for(&data, 5, 0);
    plan.checksum.replace_range(0..1, if plan.checksum.starts_with('0') { "1" } else { "0" });
    let err = run_cv(&plan, &data, &[Arm::GtOnly], &CvConfig::default()).unwrap_err();
    assert!(matches!(err, EvalError::ChecksumMismatch { .. }));
}

#[test]
fn run_cv_reports_missing_store_entries() {
    let mut data = cv_data(&CorpusSpec { n_per_class: [5, 5, 5], ..CorpusSpec::default() }, None);
    let plan = plan_for(&data, 5, 0);
    let gone = data.ground_truth.keys().nth(3).unwrap().clone();
    data.ground_truth.remove(&gone);
    let err = run_cv(&plan, &data, &[Arm::GtOnly], &CvConfig::default()).unwrap_err();
    assert_eq!(err, EvalError::MissingStore { store: "ground-truth", id: gone });
}

#[test]
fn audit_passes_a_correct_wiring() {
    let plan = make_fold_plan(&labels_with_counts([10, 20, 30]), 5, 1, "t").unwrap();
    let pool: BTreeSet<String> = (0..50).map(|i| format!("pool{i}")).collect();
    let report = leakage_audit(&plan, &wired_artifacts(&plan, &pool));
    assert!(report.passed());
    assert_eq!(report.checks.len(), 20);
    assert!(report.checks.iter().all(|c| c.passed));
    let text = format!("{report}");
    assert_eq!(text.matches("PASS").count(), 20);
}

#[test]
fn each_injected_id_yields_one_named_violation() {
    let plan = make_fold_plan(&labels_with_counts([10, 20, 30]), 5, 1, "t").unwrap();
    let pool: BTreeSet<String> = (0..50).map(|i| format!("pool{i}")).collect();
    for fold in 0..5 {
        let leaked = plan.test_ids(fold).into_iter().next().unwrap();
        for rule in AuditRule::ALL {
            let mut artifacts = wired_artifacts(&plan, &pool);
            let a = &mut artifacts[fold];
            match rule {
                AuditRule::LabellerTrainDisjointFromTest => a.labeller_train_ids.insert(leaked.clone()),
                AuditRule::HybridTrainDisjointFromTest => a.hybrid_train_ids.insert(leaked.clone()),
                AuditRule::PoolExcludesGroundTruth => a.pseudo_pool_ids.insert(leaked.clone()),
                AuditRule::NormalizerFitOnTrainOnly => a.normalizer_fit_ids.insert(leaked.clone()),
            };
            let report = leakage_audit(&plan, &artifacts);
            assert_eq!(report.violations, [Violation { fold, rule, id: leaked.clone() }]);
            assert_eq!(report.checks.iter().filter(|c| !c.passed).count(), 1);
            assert!(format!("{report}").contains(&leaked));
        }
    }
}

#[test]
fn pool_containing_a_training_id_is_flagged() {
    let plan = make_fold_plan(&labels_with_counts([10, 10, 10]), 5, 1, "t").unwrap();
    let train_id = plan.train_ids(0).into_iter().next().unwrap();
    let pool: BTreeSet<String> = [String::from("pool0"), train_id.clone()].into();
    let report = leakage_audit(&plan, &wired_artifacts(&plan, &pool));
    assert_eq!(report.violations.len(), 5);
    assert!(report.violations.iter().all(|v| v.rule == AuditRule::PoolExcludesGroundTruth && v.id == train_id));
}

#[test]
fn perfect_predictions() {
    let y = [Low, Medium, High, High, Medium, Low, High];
    let m = classification_metrics(&y, &y).unwrap();
    assert_eq!(m.macro_f1, 1.0);
    assert_eq!(m.per_class_f1, [1.0; 3]);
    assert_eq!(m.confusion, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
}

#[test]
fn all_high_on_a_balanced_set() {
    let labels: Vec<ConfidenceLabel> = (0..30).map(|i| ConfidenceLabel::from_index(i % 3).unwrap()).collect();
    let preds = [High; 30];
    let m = classification_metrics(&preds, &labels).unwrap();
    // precision 10/30, recall 1
    let f1_high = 2.0 * (1.0 / 3.0) / (1.0 / 3.0 + 1.0);
    assert_eq!(m.per_class_f1[0], 0.0);
    assert_eq!(m.per_class_f1[1], 0.0);
    assert!((m.per_class_f1[2] - 0.5).abs() < 1e-15);
    assert!((m.macro_f1 - f1_high / 3.0).abs() < 1e-15);
    assert_eq!(m.confusion, [[0.0, 0.0, 1.0]; 3]);
}

#[test]
fn macro_is_the_mean_and_rows_are_normalized() {
    let mut rng = SeededRng::new(4);
    for n in [3usize, 17, 200] {
        let labels: Vec<ConfidenceLabel> = (0..n).map(|_| ConfidenceLabel::from_index(rng.index(3)).unwrap()).collect();
        let preds: Vec<ConfidenceLabel> = (0..n).map(|_| ConfidenceLabel::from_index(rng.index(3)).unwrap()).collect();
        let m = classification_metrics(&preds, &labels).unwrap();
        assert!((m.macro_f1 - m.per_class_f1.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        for (c, row) in m.confusion.iter().enumerate() {
            if labels.iter().any(|l| l.index() == c) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        assert_eq!(m.counts.iter().flatten().sum::<usize>(), n);
    }
}

#[test]
fn metrics_reject_bad_input() {
    assert_eq!(classification_metrics(&[], &[]).unwrap_err(), EvalError::EmptyInput);
    assert_eq!(classification_metrics(&[Low], &[Low, High]).unwrap_err(), EvalError::EmptyInput);
}

#[test]
fn summary_uses_sample_std() {
    let report = |fold, f1: f64| FoldReport {
        fold,
        arm: Arm::Proposed,
        per_class_f1: [f1; 3],
        macro_f1: f1,
        confusion: [[0.0; 3]; 3],
        n_pseudo_used: 0,
        n_test: 1,
    };
    let reports: Vec<FoldReport> = [0.6, 0.7, 0.8, 0.9, 1.0].iter().enumerate().map(|(i, &f)| report(i, f)).collect();
    let s = CvSummary::from_reports(Arm::Proposed, &reports);
    assert_eq!(s.folds, 5);
    assert!((s.macro_f1_mean - 0.8).abs() < 1e-12);
    // squared deviations sum to 0.1
    assert!((s.macro_f1_std - (0.1f64 / 4.0).sqrt()).abs() < 1e-12);
}

#[test]
fn k2_smoke_run_emits_two_reports() {
    let data = cv_data(&CorpusSpec { n_per_class: [10, 10, 10], ..CorpusSpec::default() }, None);
    let plan = plan_for(&data, 2, 0);
    let cfg = CvConfig { hybrid: HybridConfig { epochs: 2, ..HybridConfig::default() }, ..CvConfig::default() };
    let out = run_cv(&plan, &data, &[Arm::GtOnly], &cfg).unwrap();
    assert_eq!(out.reports.len(), 2);
    assert_eq!(out.summaries.len(), 1);
    assert_eq!(out.summaries[0].folds, 2);
    assert!(out.audit.passed());
    assert_eq!(out.reports.iter().map(|r| r.n_test).sum::<usize>(), 30);
    for r in &out.reports {
        assert!((r.macro_f1 - r.per_class_f1.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    }
}

#[test]
fn pseudo_arms_run_and_pass_the_audit() {
    let data = cv_data(
        &CorpusSpec { n_per_class: [10, 10, 10], ..CorpusSpec::separable(1) },
        Some(&CorpusSpec { id_prefix: "pool", n_per_class: [10, 10, 10], ..CorpusSpec::separable(2) }),
    );
    let plan = plan_for(&data, 2, 0);
    let mut cfg = CvConfig::default();
    cfg.labeller.internal_folds = 0;
    cfg.labeller.max_epochs = 5;
    cfg.hybrid.epochs = 2;
    let arms = [Arm::NoFilter, Arm::Proposed, Arm::FvOnly, Arm::EmbeddingOnly];
    let out = run_cv(&plan, &data, &arms, &cfg).unwrap();
    assert_eq!(out.reports.len(), 8);
    assert!(out.audit.passed());
    assert_eq!(out.audit.checks.len(), 8);
    for r in out.reports.iter().filter(|r| r.arm == Arm::NoFilter) {
        assert_eq!(r.n_pseudo_used, 30);
    }
    for r in out.reports.iter().filter(|r| r.arm != Arm::NoFilter) {
        assert!(r.n_pseudo_used <= 30);
    }
}

fn importance_model() -> (crate::hybrid::HybridModel, Vec<HybridSample>) {
    let spec = CorpusSpec { n_per_class: [200, 200, 200], informative_dims: alloc::vec![0], feature_signal: 6.0, ..CorpusSpec::default() };
    let train = corpus(&spec);
    let test = corpus(&CorpusSpec { id_prefix: "test", seed: 99, ..spec });
    let norm = Normalizer::fit(&train.features).unwrap();
    let to_samples = |c: &crate::synthetic::SyntheticCorpus| -> Vec<HybridSample> {
        (0..c.labels.len())
            .map(|i| HybridSample {
                id: c.features[i].id.clone(),
                features: norm.apply(&c.features[i]).unwrap(),
                embedding: c.embeddings[i].clone(),
                label: c.labels[i],
                source: Source::GroundTruth,
            })
            .collect()
    };
    let cfg = HybridConfig { mode: FusionMode::FeatureOnly, epochs: 25, ..HybridConfig::default() };
    let (model, _) = train_hybrid(&to_samples(&train), &[], &BTreeSet::new(), &cfg).unwrap();
    (model, to_samples(&test))
}

#[test]
fn permutation_importance_separates_signal_from_noise_and_guards_inputs() {
    let (model, test) = importance_model();
    let imp = permutation_importance(&model, &test, 10, 0).unwrap();
    assert_eq!(imp.len(), crate::features::FEATURE_DIM);
    assert!(imp[0] > 0.1, "dominant {}", imp[0]);
    assert!(imp[50].abs() <= 0.02, "irrelevant {}", imp[50]);
    assert_eq!(imp, permutation_importance(&model, &test, 10, 0).unwrap());
    assert!(matches!(permutation_importance(&model, &test, 0, 0), Err(EvalError::TooFewSamples { .. })));
    assert!(matches!(permutation_importance(&model, &test[..5], 10, 0), Err(EvalError::TooFewSamples { .. })));
}
