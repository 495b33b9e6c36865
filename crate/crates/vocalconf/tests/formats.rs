use std::collections::{BTreeMap, BTreeSet};

use vocalconf::annotations::{append_annotation, read_annotations, read_rater_matrix, write_rater_matrix};
use vocalconf::checkpoint::{decode_labeller, encode_labeller, load_hybrid, load_labeller, save_hybrid, save_labeller};
use vocalconf::embeddings::{decode, encode, read_embeddings, write_binary, write_csv, Embeddings};
use vocalconf::feature_store::{read_feature_store, write_feature_store};
use vocalconf::json::{read_fold_plan, write_fold_plan};
use vocalconf::tables::{read_labels, read_pseudo_set, write_pseudo_set};
use vocalconf::wav::{read_clip, write_clip};
use vocalconf::Error;
use vocalconf_core::annotation::{build_rater_matrix, AnnotationRecord, RatingValue};
use vocalconf_core::audio::AudioClip;
use vocalconf_core::evaluation::make_fold_plan;
use vocalconf_core::features::{FeatureVector, Normalizer, FEATURE_DIM};
use vocalconf_core::hybrid::{predict, train_hybrid, HybridConfig, HybridSample, Source};
use vocalconf_core::label::ConfidenceLabel;
use vocalconf_core::pseudo::{train_labeller, LabellerConfig, PseudoSample, PseudoSet};
use vocalconf_core::synthetic::{corpus, CorpusSpec};

fn small_corpus() -> (Vec<FeatureVector>, Vec<Vec<f64>>, Vec<ConfidenceLabel>) {
    let c = corpus(&CorpusSpec { n_per_class: [20, 20, 20], emb_dim: 6, ..CorpusSpec::separable(3) });
    (c.features, c.embeddings, c.labels)
}

#[test]
fn feature_store_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let (features, _, _) = small_corpus();
    write_feature_store(&path, &features).unwrap();
    assert_eq!(read_feature_store(&path).unwrap(), features);
}

#[test]
fn feature_store_rejects_duplicate_ids_and_bad_headers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let (features, _, _) = small_corpus();
    write_feature_store(&path, &[features[0].clone(), features[0].clone()]).unwrap();
    assert!(matches!(read_feature_store(&path), Err(Error::Parse { line: 3, .. })));
    std::fs::write(&path, "id,x\na,1\n").unwrap();
    assert!(read_feature_store(&path).is_err());
}

#[test]
fn embeddings_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    // Values representable in f32 so the binary format is exact.
    let store: Embeddings = (0..5).map(|i| (format!("c{i}"), (0..4).map(|j| (i * 4 + j) as f64 * 0.25 - 1.0).collect())).collect();
    let bin = dir.path().join("e.emb");
    let csv = dir.path().join("e.csv");
    write_binary(&bin, &store).unwrap();
    write_csv(&csv, &store).unwrap();
    assert_eq!(read_embeddings(&bin).unwrap(), store);
    assert_eq!(read_embeddings(&csv).unwrap(), store);
    assert_eq!(decode(&encode(&store).unwrap()).unwrap(), store);
}

#[test]
fn embeddings_reject_ragged_dimensions_and_truncation() {
    let mut store: Embeddings = BTreeMap::new();
    store.insert("a".into(), vec![1.0, 2.0]);
    store.insert("b".into(), vec![1.0]);
    assert!(encode(&store).is_err());
    store.insert("b".into(), vec![3.0, 4.0]);
    let bytes = encode(&store).unwrap();
    assert!(decode(&bytes[..bytes.len() - 1]).is_err());
}

fn normalized(features: &[FeatureVector]) -> Vec<FeatureVector> {
    let norm = Normalizer::fit(features).unwrap();
    features.iter().map(|f| norm.apply(f).unwrap()).collect()
}

#[test]
fn labeller_checkpoint_preserves_hash_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (features, _, labels) = small_corpus();
    let x = normalized(&features);
    let cfg = LabellerConfig { internal_folds: 0, max_epochs: 5, ..LabellerConfig::default() };
    let (labeller, _) = train_labeller(&x, &labels, &BTreeSet::new(), &cfg).unwrap();
    let path = dir.path().join("l.csnn");
    save_labeller(&path, &labeller).unwrap();
    let back = load_labeller(&path).unwrap();
    assert_eq!(back.checkpoint_hash(), labeller.checkpoint_hash());
    assert_eq!(back.probabilities(&x, true).unwrap(), labeller.probabilities(&x, true).unwrap());
    assert_eq!(back.train_ids, labeller.train_ids);
}

#[test]
fn checkpoint_rejects_corruption() {
    let (features, _, labels) = small_corpus();
    let x = normalized(&features);
    let cfg = LabellerConfig { internal_folds: 0, max_epochs: 1, ..LabellerConfig::default() };
    let (labeller, _) = train_labeller(&x, &labels, &BTreeSet::new(), &cfg).unwrap();
    let bytes = encode_labeller(&labeller);
    assert!(decode_labeller(&bytes[..bytes.len() - 8]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_labeller(&bad).unwrap_err().contains("magic"));
    let mut bad = bytes;
    bad[4] = 9;
    assert!(decode_labeller(&bad).unwrap_err().contains("version"));
}

#[test]
fn hybrid_checkpoint_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let (features, embeddings, labels) = small_corpus();
    let x = normalized(&features);
    let samples: Vec<HybridSample> = x
        .iter()
        .zip(&embeddings)
        .zip(&labels)
        .map(|((f, e), &label)| HybridSample { id: f.id.clone(), features: f.clone(), embedding: e.clone(), label, source: Source::GroundTruth })
        .collect();
    let cfg = HybridConfig { epochs: 3, ..HybridConfig::default() };
    let (model, _) = train_hybrid(&samples, &[], &BTreeSet::new(), &cfg).unwrap();
    let path = dir.path().join("h.csnn");
    save_hybrid(&path, &model).unwrap();
    let back = load_hybrid(&path).unwrap();
    assert_eq!(back.state_vector(), model.state_vector());
    assert_eq!(predict(&back, &samples).unwrap(), predict(&model, &samples).unwrap());
}

#[test]
fn pseudo_set_round_trips_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let set = PseudoSet {
        samples: vec![
            PseudoSample { clip_id: "u1".into(), label: ConfidenceLabel::High, max_prob: 0.91, fold: 2 },
            PseudoSample { clip_id: "u7".into(), label: ConfidenceLabel::Low, max_prob: 0.8, fold: 2 },
        ],
        provenance: "abc".into(),
        tau: 0.8,
        pool_size: 10,
        retained: 2,
        fold: 2,
    };
    write_pseudo_set(&path, &set).unwrap();
    assert_eq!(read_pseudo_set(&path).unwrap(), set);
    let sidecar = std::fs::read_to_string(dir.path().join("p.json")).unwrap();
    assert!(sidecar.contains("\"high\": 1"));
}

#[test]
fn fold_plan_round_trips_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    let labels: BTreeMap<String, ConfidenceLabel> = (0..30).map(|i| (format!("c{i:02}"), ConfidenceLabel::ALL[i % 3])).collect();
    let plan = make_fold_plan(&labels, 5, 1, "2024-01-01T00:00:00Z").unwrap();
    write_fold_plan(&path, &plan).unwrap();
    assert_eq!(read_fold_plan(&path).unwrap(), plan);
    let text = std::fs::read_to_string(&path).unwrap();
    let fold = plan.assignments["c00"];
    let tampered = text.replacen(&format!("\"c00\": {fold}"), &format!("\"c00\": {}", (fold + 1) % 5), 1);
    assert_ne!(tampered, text);
    std::fs::write(&path, tampered).unwrap();
    assert!(read_fold_plan(&path).is_err());
}

#[test]
fn annotations_append_and_read_back_latest_wins() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    assert!(read_annotations(&path).unwrap().is_empty());
    let rec = |rater: &str, value: RatingValue, ts: f64| AnnotationRecord { clip_id: "c1".into(), rater_id: rater.into(), value, timestamp: ts };
    let records = [
        rec("r1", RatingValue::Rated(ConfidenceLabel::Low), 1.0),
        rec("r2", RatingValue::NotClear, 2.0),
        rec("r1", RatingValue::Rated(ConfidenceLabel::High), 3.0),
    ];
    for r in &records {
        append_annotation(&path, r).unwrap();
    }
    let back = read_annotations(&path).unwrap();
    assert_eq!(back, records);
    let m = build_rater_matrix(&back);
    assert_eq!(m.cells, vec![vec![Some(RatingValue::Rated(ConfidenceLabel::High)), Some(RatingValue::NotClear)]]);

    let csv = dir.path().join("m.csv");
    write_rater_matrix(&csv, &m).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), "clip_id,r1,r2\nc1,2,NC\n");
    assert_eq!(read_rater_matrix(&csv).unwrap(), m);
}

#[test]
fn malformed_annotation_line_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    std::fs::write(&path, "{\"clip_id\":\"c\",\"rater_id\":\"r\",\"value\":\"low\",\"ts\":1}\n\n{\"clip_id\":\"c\",\"rater_id\":\"r\",\"value\":\"huge\",\"ts\":2}\n").unwrap();
    assert!(matches!(read_annotations(&path), Err(Error::Parse { line: 3, .. })));
}

#[test]
fn labels_accept_names_and_indices() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.csv");
    std::fs::write(&path, "clip_id,label,extra\na,low,x\nb,2,y\nc,medium,z\n").unwrap();
    let labels = read_labels(&path).unwrap();
    assert_eq!(labels["a"], ConfidenceLabel::Low);
    assert_eq!(labels["b"], ConfidenceLabel::High);
    assert_eq!(labels["c"], ConfidenceLabel::Medium);
    std::fs::write(&path, "clip_id,label\na,loud\n").unwrap();
    assert!(matches!(read_labels(&path), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn wav_round_trip_within_16_bit_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let samples: Vec<f64> = (0..1600).map(|i| 0.5 * (i as f64 * 0.05).sin()).collect();
    write_clip(&path, &AudioClip::new("x", samples.clone(), 16_000)).unwrap();
    let back = read_clip(&path, "x").unwrap();
    assert_eq!(back.sample_rate, 16_000);
    assert_eq!(back.samples.len(), samples.len());
    let worst = back.samples.iter().zip(&samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1.0 / 32768.0, "worst error {worst}");
}

#[test]
fn feature_vectors_have_the_full_width() {
    let (features, _, _) = small_corpus();
    assert!(features.iter().all(|f| f.values().len() == FEATURE_DIM));
}
