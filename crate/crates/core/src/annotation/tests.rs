use super::*;
use crate::synthetic::rater_panel;
use alloc::format;
use alloc::string::ToString;
use ConfidenceLabel::*;

fn rec(c: &str, r: &str, v: RatingValue, ts: f64) -> AnnotationRecord {
    AnnotationRecord { clip_id: c.to_string(), rater_id: r.to_string(), value: v, timestamp: ts }
}

fn matrix_from(rows: &[[u8; 4]]) -> RaterMatrix {
    RaterMatrix::from_labels(
        (0..rows.len()).map(|i| format!("c{i}")).collect(),
        (0..4).map(|j| format!("r{j}")).collect(),
        rows.iter()
            .map(|r| r.iter().map(|&v| Some(RatingValue::Rated(ConfidenceLabel::from_index(v as usize).unwrap()))).collect())
            .collect(),
    )
}

/// Textbook computational-formula ANOVA (grand total and marginal totals),
/// independent of the deviation-based implementation.
fn anova_oracle(x: &[Vec<f64>]) -> (f64, f64) {
    let n = x.len() as f64;
    let k = x[0].len() as f64;
    let g: f64 = x.iter().flatten().sum();
    let cf = g * g / (n * k);
    let sst: f64 = x.iter().flatten().map(|v| v * v).sum::<f64>() - cf;
    let ssr: f64 = x.iter().map(|r| r.iter().sum::<f64>().powi(2)).sum::<f64>() / k - cf;
    let ssc: f64 = (0..x[0].len()).map(|j| x.iter().map(|r| r[j]).sum::<f64>().powi(2)).sum::<f64>() / n - cf;
    let sse = sst - ssr - ssc;
    let (msr, msc, mse) = (ssr / (n - 1.0), ssc / (k - 1.0), sse / ((n - 1.0) * (k - 1.0)));
    (
        (msr - mse) / (msr + (k - 1.0) * mse + k * (msc - mse) / n),
        (msr - mse) / (msr + (msc - mse) / n),
    )
}

const FIXTURE: [[u8; 4]; 6] = [[2, 2, 1, 2], [0, 1, 0, 0], [1, 1, 2, 1], [2, 2, 2, 1], [0, 0, 1, 1], [1, 2, 1, 1]];

#[test]
fn build_matrix_full_grid() {
    let recs = [
        rec("c1", "r1", RatingValue::Rated(Low), 1.0),
        rec("c1", "r2", RatingValue::Rated(High), 1.0),
        rec("c2", "r1", RatingValue::Rated(Medium), 1.0),
        rec("c2", "r2", RatingValue::Rated(Medium), 1.0),
    ];
    let m = build_rater_matrix(&recs);
    assert_eq!(m.clips.len(), 2);
    assert_eq!(m.raters.len(), 2);
    assert!(m.cells.iter().flatten().all(Option::is_some));
}

#[test]
fn latest_timestamp_wins() {
    let recs = [rec("c1", "r1", RatingValue::Rated(High), 2.0), rec("c1", "r1", RatingValue::Rated(Low), 1.0)];
    assert_eq!(build_rater_matrix(&recs).cells[0][0], Some(RatingValue::Rated(High)));
}

#[test]
fn not_clear_excluded_from_complete_cases() {
    let recs = [
        rec("c1", "r1", RatingValue::NotClear, 1.0),
        rec("c1", "r2", RatingValue::Rated(Low), 1.0),
        rec("c2", "r1", RatingValue::Rated(Low), 1.0),
        rec("c2", "r2", RatingValue::Rated(Low), 1.0),
    ];
    let m = build_rater_matrix(&recs);
    assert_eq!(m.cells[0][0], Some(RatingValue::NotClear));
    assert_eq!(m.complete_case_rows(), vec![1]);
}

#[test]
fn empty_records_empty_matrix() {
    let m = build_rater_matrix(&[]);
    assert!(m.clips.is_empty() && m.raters.is_empty());
}

#[test]
fn identical_raters_give_unit_icc() {
    let m = matrix_from(&[[0; 4], [1; 4], [2; 4], [1; 4]]);
    let r = icc_2k(&m).unwrap();
    assert_eq!(r.icc_single, 1.0);
    assert_eq!(r.icc_average, 1.0);
}

#[test]
fn icc_matches_anova_oracle() {
    let m = matrix_from(&FIXTURE);
    let r = icc_2k(&m).unwrap();
    let (single, avg) = anova_oracle(&m.complete_case_values());
    assert!((r.icc_single - single).abs() < 1e-9);
    assert!((r.icc_average - avg).abs() < 1e-9);
    // Frozen from an independent numpy/scipy computation of the same fixture.
    assert!((r.icc_single - 0.549_763_033_175_355_4).abs() < 1e-9);
    assert!((r.icc_average - 0.830_053_667_262_969_6).abs() < 1e-9);
    assert!((r.f_stat - 5.504_854_368_932_037).abs() < 1e-9);
    assert_eq!((r.df1, r.df2, r.n_used), (5, 15, 6));
    assert!((r.ci95_single_low - 0.140_432_386_445_604_57).abs() < 1e-6);
    assert!((r.ci95_single_high - 0.902_428_671_130_981_4).abs() < 1e-6);
    assert!((r.ci95_low - 0.395_223_153_787_575_9).abs() < 1e-6);
    assert!((r.ci95_high - 0.973_681_197_372_813_3).abs() < 1e-6);
}

#[test]
fn rater_bias_lowers_absolute_agreement() {
    let base = matrix_from(&FIXTURE);
    let x = base.complete_case_values();
    let biased: Vec<Vec<f64>> = x.iter().map(|r| r.iter().enumerate().map(|(j, v)| v + 0.5 * j as f64).collect()).collect();
    let ms0 = two_way_mean_squares(&x);
    let ms1 = two_way_mean_squares(&biased);
    assert!((ms0.rows - ms1.rows).abs() < 1e-12);
    assert!((ms0.error - ms1.error).abs() < 1e-12);
    assert!(ms1.columns > ms0.columns);
    let (_, avg0) = anova_oracle(&x);
    let (_, avg1) = anova_oracle(&biased);
    assert!(avg1 < avg0);
}

#[test]
fn icc_needs_complete_cases() {
    let m = matrix_from(&[[0, 1, 2, 1]]);
    assert_eq!(icc_2k(&m), Err(AnnotationError::InsufficientCompleteCases { clips: 1, raters: 4 }));
}

#[test]
fn unanimous_panel_is_fixed_point() {
    let rows: Vec<[u8; 4]> = (0..30).map(|i| [(i % 3) as u8; 4]).collect();
    let m = matrix_from(&rows);
    let ds = dawid_skene(&m, 100, 1e-6).unwrap();
    for (i, l) in ds.hard_labels().iter().enumerate() {
        assert_eq!(l.index(), i % 3);
        assert!(ds.posteriors[i].iter().cloned().fold(0.0, f64::max) >= 0.99);
    }
}

#[test]
fn single_rater_labels_pass_through() {
    let labels = [Low, High, Medium, Medium, High];
    let m = RaterMatrix::from_labels(
        (0..5).map(|i| format!("c{i}")).collect(),
        alloc::vec!["r".into()],
        labels.iter().map(|&l| alloc::vec![Some(RatingValue::Rated(l))]).collect(),
    );
    let ds = dawid_skene(&m, 100, 1e-6).unwrap();
    assert_eq!(ds.hard_labels(), labels.to_vec());
}

#[test]
fn clip_without_annotation_is_error() {
    let m = RaterMatrix::from_labels(alloc::vec!["c0".into()], alloc::vec!["r".into()], alloc::vec![alloc::vec![Some(RatingValue::NotClear)]]);
    assert_eq!(dawid_skene(&m, 10, 1e-6), Err(AnnotationError::ClipWithoutValidAnnotations("c0".into())));
}

#[test]
fn recovers_generating_accuracies() {
    let panel = rater_panel(200, &[0.9, 0.85, 0.8, 0.75, 0.4], [0.3, 0.35, 0.35], 0);
    let ds = dawid_skene(&panel.matrix, 100, 1e-6).unwrap();
    for (j, &acc) in panel.accuracies.iter().enumerate() {
        let est = ds.rater_accuracy(j);
        assert!((est - acc).abs() <= 0.05, "rater {j}: {est} vs {acc}");
    }
    for w in ds.log_likelihood_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
    }
    let acc = |labels: &[ConfidenceLabel]| labels.iter().zip(&panel.truth).filter(|(a, b)| a == b).count();
    let mv: Vec<ConfidenceLabel> = majority_vote(&panel.matrix).into_iter().map(Option::unwrap).collect();
    assert!(acc(&ds.hard_labels()) > acc(&mv));
}

#[test]
fn posteriors_normalized_and_rows_stochastic() {
    let panel = rater_panel(60, &[0.7, 0.6, 0.8], [0.2, 0.3, 0.5], 3);
    let ds = dawid_skene(&panel.matrix, 100, 1e-6).unwrap();
    for p in &ds.posteriors {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    for m in &ds.confusions {
        for row in m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn rater_order_does_not_matter() {
    let panel = rater_panel(80, &[0.9, 0.6, 0.7, 0.5], [0.3, 0.3, 0.4], 5);
    let a = dawid_skene(&panel.matrix, 100, 1e-6).unwrap();
    let b = dawid_skene(&panel.matrix.permute_raters(&[2, 0, 3, 1]), 100, 1e-6).unwrap();
    assert_eq!(a.hard_labels(), b.hard_labels());
    for (p, q) in a.posteriors.iter().zip(&b.posteriors) {
        for (x, y) in p.iter().zip(q) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn identical_confusions_reduce_to_majority_vote() {
    // One E-step with equal rater confusions and uniform priors ranks classes by vote count.
    let panel = rater_panel(50, &[0.7, 0.7, 0.7, 0.7, 0.7], [1.0 / 3.0; 3], 9);
    let obs: Vec<_> = (0..50).map(|i| panel.matrix.observations(i)).collect();
    let conf = [[0.7, 0.15, 0.15], [0.15, 0.7, 0.15], [0.15, 0.15, 0.7]];
    let params = DsParams { priors: [1.0 / 3.0; 3], confusions: alloc::vec![conf; 5] };
    let (post, _) = e_step(&obs, &params);
    for (i, o) in obs.iter().enumerate() {
        let votes = vote_posterior(o);
        if votes.iter().filter(|&&v| v > 0.0).count() == 1 {
            assert_eq!(crate::math::argmax(&post[i]), crate::math::argmax(&votes));
        }
    }
}

#[test]
fn consensus_flags_ambiguous() {
    let ds = ConsensusLabels {
        clips: alloc::vec!["a".into(), "b".into()],
        raters: alloc::vec![],
        posteriors: alloc::vec![[0.7, 0.2, 0.1], [0.34, 0.33, 0.33]],
        priors: [1.0 / 3.0; 3],
        confusions: alloc::vec![],
        iterations: 0,
        converged: true,
        log_likelihood_trace: alloc::vec![],
    };
    let items = derive_consensus_dataset(&ds);
    assert_eq!((items[0].label, items[0].ambiguous), (Low, false));
    assert_eq!((items[1].label, items[1].ambiguous), (Low, true));
}

#[test]
fn large_panel_consensus_keeps_every_clip() {
    let panel = rater_panel(600, &[0.8, 0.7, 0.75, 0.6, 0.65, 0.7, 0.72], [0.15, 0.35, 0.5], 1);
    let ds = dawid_skene(&panel.matrix, 100, 1e-6).unwrap();
    assert_eq!(derive_consensus_dataset(&ds).len(), 600);
}

#[test]
fn rating_value_strings() {
    assert_eq!("not_clear".parse::<RatingValue>().unwrap(), RatingValue::NotClear);
    assert_eq!("medium".parse::<RatingValue>().unwrap(), RatingValue::Rated(Medium));
    assert!("very_high".parse::<RatingValue>().is_err());
}
