use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::features::Normalizer;
use crate::neural::weighted_sample;
use crate::synthetic::{corpus, CorpusSpec};

fn normalized(spec: &CorpusSpec, norm: Option<&Normalizer>) -> (Vec<FeatureVector>, Vec<ConfidenceLabel>, Normalizer) {
    let c = corpus(spec);
    let norm = norm.cloned().unwrap_or_else(|| Normalizer::fit(&c.features).unwrap());
    let fvs = c.features.iter().map(|f| norm.apply(f).unwrap()).collect();
    (fvs, c.labels, norm)
}

fn quick_cfg() -> LabellerConfig {
    LabellerConfig { max_epochs: 60, ..LabellerConfig::default() }
}

fn trained() -> (Labeller, LabellerReport, Normalizer, BTreeSet<String>) {
    let (fvs, labels, norm) = normalized(&CorpusSpec::separable(0), None);
    let ids = fvs.iter().map(|f| f.id.clone()).collect();
    let (l, r) = train_labeller(&fvs, &labels, &BTreeSet::new(), &quick_cfg()).unwrap();
    (l, r, norm, ids)
}

fn pool(norm: &Normalizer) -> Vec<FeatureVector> {
    let spec = CorpusSpec { id_prefix: "pool", noisy_fraction: 0.5, noisy_shift: 0.5, ..CorpusSpec::separable(99) };
    normalized(&spec, Some(norm)).0
}

#[test]
fn separable_features_give_high_internal_cv() {
    let (l, r, _, _) = trained();
    assert_eq!(r.folds.len(), 5);
    assert!(r.mean_macro_f1 >= 0.95, "{}", r.mean_macro_f1);
    assert!(r.temperature > 0.0);
    assert_eq!(l.calibration.temperature, r.temperature);
    assert_eq!(l.model.input_dim(), 94);
    assert_eq!(l.model.output_dim(), 3);
}

#[test]
fn held_out_id_in_input_is_leakage() {
    let (fvs, labels, _) = normalized(&CorpusSpec::default(), None);
    let held: BTreeSet<String> = [fvs[17].id.clone()].into();
    let err = train_labeller(&fvs, &labels, &held, &quick_cfg()).unwrap_err();
    assert_eq!(err, PseudoError::LeakageDetected(fvs[17].id.clone()));
}

#[test]
fn missing_class_is_rejected() {
    let spec = CorpusSpec { n_per_class: [20, 0, 20], ..CorpusSpec::default() };
    let (fvs, labels, _) = normalized(&spec, None);
    let err = train_labeller(&fvs, &labels, &BTreeSet::new(), &quick_cfg()).unwrap_err();
    assert_eq!(err, PseudoError::ClassAbsent(ConfidenceLabel::Medium));
}

#[test]
fn unnormalized_input_is_rejected() {
    let c = corpus(&CorpusSpec::default());
    let err = train_labeller(&c.features, &c.labels, &BTreeSet::new(), &quick_cfg()).unwrap_err();
    assert!(matches!(err, PseudoError::NotNormalized(_)));
}

#[test]
fn threshold_applies_to_max_probability() {
    let probs: Vec<Vec<f64>> = [0.95, 0.85, 0.70, 0.81, 0.30]
        .iter()
        .map(|&p| {
            let rest = (1.0 - p) / 2.0;
            vec![p, rest, rest]
        })
        .collect();
    assert_eq!(retain_confident(&probs, 0.8), vec![0, 1, 3]);
}

#[test]
fn pseudo_labelling_contracts() {
    let (l, _, norm, gt_ids) = trained();
    let pool = pool(&norm);
    let all = generate_pseudo_labels(&l, &pool, &gt_ids, 2, &PseudoLabelConfig { tau: 0.0, calibrate_before_filter: true }).unwrap();
    assert_eq!(all.retained, pool.len());
    assert_eq!(all.pool_size, pool.len());

    let at = |tau| generate_pseudo_labels(&l, &pool, &gt_ids, 2, &PseudoLabelConfig { tau, calibrate_before_filter: true }).unwrap();
    let loose = at(0.8);
    let strict = at(0.9);
    assert!(strict.ids().is_subset(&loose.ids()));
    assert!(strict.retained < all.retained);
    for set in [&loose, &strict] {
        assert!(set.samples.iter().all(|s| s.max_prob >= set.tau && s.fold == 2));
        assert!(set.mean_max_prob() >= set.tau);
        assert!(set.ids().is_disjoint(&gt_ids));
        assert_eq!(set.provenance, l.checkpoint_hash());
    }
    assert_eq!(loose, at(0.8));
}

#[test]
fn pool_overlapping_ground_truth_is_rejected() {
    let (l, _, norm, gt_ids) = trained();
    let mut pool = pool(&norm);
    let (gt, _, _) = normalized(&CorpusSpec::separable(0), Some(&norm));
    pool.push(gt[3].clone());
    let err = generate_pseudo_labels(&l, &pool, &gt_ids, 0, &PseudoLabelConfig::default()).unwrap_err();
    assert_eq!(err, PseudoError::PoolOverlapsGroundTruth(gt[3].id.clone()));
}

#[test]
fn foreign_normalizer_is_rejected() {
    let (l, _, _, gt_ids) = trained();
    let other = corpus(&CorpusSpec { id_prefix: "pool", seed: 5, ..CorpusSpec::default() });
    let foreign = Normalizer::fit(&other.features).unwrap();
    let pool: Vec<FeatureVector> = other.features.iter().map(|f| foreign.apply(f).unwrap()).collect();
    let err = generate_pseudo_labels(&l, &pool, &gt_ids, 0, &PseudoLabelConfig::default()).unwrap_err();
    assert!(matches!(err, PseudoError::NormalizerMismatch(_)));
}

#[test]
fn training_is_reproducible() {
    let (fvs, labels, _) = normalized(&CorpusSpec::default(), None);
    let cfg = LabellerConfig { internal_folds: 0, max_epochs: 15, ..LabellerConfig::default() };
    let (a, ra) = train_labeller(&fvs, &labels, &BTreeSet::new(), &cfg).unwrap();
    let (b, rb) = train_labeller(&fvs, &labels, &BTreeSet::new(), &cfg).unwrap();
    assert_eq!(a.checkpoint_hash(), b.checkpoint_hash());
    assert_eq!(ra, rb);
    assert!(ra.folds.is_empty());
}

fn set_with(counts: [usize; 3]) -> PseudoSet {
    let mut samples = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            samples.push(PseudoSample {
                clip_id: alloc::format!("p{c}_{i}"),
                label: ConfidenceLabel::from_index(c).unwrap(),
                max_prob: 0.9,
                fold: 0,
            });
        }
    }
    PseudoSet { retained: samples.len(), pool_size: samples.len(), samples, provenance: String::new(), tau: 0.8, fold: 0 }
}

#[test]
fn class_balance_uses_inverse_frequency() {
    let cfg = pseudo_class_balance(&set_with([10, 0, 90]), 0).unwrap();
    assert_eq!(cfg.class_weight(0).unwrap(), 1.0 / 10.0);
    assert_eq!(cfg.class_weight(2).unwrap(), 1.0 / 90.0);
    assert!(cfg.class_weight(1).is_err());

    let cfg = pseudo_class_balance(&set_with([7, 7, 7]), 0).unwrap();
    assert!((0..3).all(|c| cfg.class_weight(c).unwrap() == 1.0 / 7.0));

    assert_eq!(pseudo_class_balance(&set_with([0, 0, 0]), 0).unwrap_err(), PseudoError::EmptyPseudoSet);
}

#[test]
fn class_balance_draws_are_uniform_over_classes() {
    let set = set_with([50, 100, 150]);
    let cfg = pseudo_class_balance(&set, 11).unwrap();
    let labels: Vec<usize> = set.samples.iter().map(|s| s.label.index()).collect();
    let mut counts = [0usize; 3];
    for i in weighted_sample(&cfg, &labels, 30_000).unwrap() {
        counts[labels[i]] += 1;
    }
    for c in counts {
        assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
    }
}
