//! Multi-rater ordinal annotations: rater matrices, ICC(2,k) reliability and
//! Dawid-Skene consensus labels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::ConfidenceLabel;
use crate::math::{exp, ln, log_sum_exp};
use crate::special::f_quantile;

const K: usize = ConfidenceLabel::COUNT;
/// Additive smoothing on Dawid-Skene priors and confusion counts.
pub const DS_SMOOTHING: f64 = 0.01;
/// Consensus labels whose top posterior falls below this are flagged ambiguous.
pub const AMBIGUITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationError {
    #[error("ICC needs at least 2 complete-case clips and 2 raters, got {clips} x {raters}")]
    InsufficientCompleteCases { clips: usize, raters: usize },
    #[error("complete-case ratings have zero variance; ICC is undefined")]
    ZeroVariance,
    #[error("clip `{0}` has no valid annotation")]
    ClipWithoutValidAnnotations(String),
    #[error("unknown rating value `{0}`")]
    UnknownValue(String),
}

/// A rater's judgement of one clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RatingValue {
    Rated(ConfidenceLabel),
    NotClear,
}

impl RatingValue {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rated(l) => l.as_str(),
            Self::NotClear => "not_clear",
        }
    }
}

impl fmt::Display for RatingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RatingValue {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "not_clear" {
            return Ok(Self::NotClear);
        }
        s.parse().map(Self::Rated).map_err(|_| AnnotationError::UnknownValue(s.into()))
    }
}

impl Serialize for RatingValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RatingValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One submitted annotation. Serialized field names match the JSONL store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub clip_id: String,
    pub rater_id: String,
    pub value: RatingValue,
    /// UTC seconds.
    #[serde(rename = "ts")]
    pub timestamp: f64,
}

/// Clips x raters grid; `None` is a missing annotation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RaterMatrix {
    pub clips: Vec<String>,
    pub raters: Vec<String>,
    pub cells: Vec<Vec<Option<RatingValue>>>,
}

/// Builds a matrix over the union of clip and rater ids (sorted). For
/// duplicate (clip, rater) pairs the latest timestamp wins; equal timestamps
/// resolve to the later record.
pub fn build_rater_matrix<'a>(records: impl IntoIterator<Item = &'a AnnotationRecord>) -> RaterMatrix {
    let mut latest: BTreeMap<(&str, &str), (f64, RatingValue)> = BTreeMap::new();
    let mut clips = BTreeSet::new();
    let mut raters = BTreeSet::new();
    for r in records {
        clips.insert(r.clip_id.as_str());
        raters.insert(r.rater_id.as_str());
        let key = (r.clip_id.as_str(), r.rater_id.as_str());
        match latest.get(&key) {
            Some((ts, _)) if *ts > r.timestamp => {}
            _ => {
                latest.insert(key, (r.timestamp, r.value));
            }
        }
    }
    let clips: Vec<String> = clips.into_iter().map(String::from).collect();
    let raters: Vec<String> = raters.into_iter().map(String::from).collect();
    let cells = clips
        .iter()
        .map(|c| raters.iter().map(|r| latest.get(&(c.as_str(), r.as_str())).map(|v| v.1)).collect())
        .collect();
    RaterMatrix { clips, raters, cells }
}

impl RaterMatrix {
    pub fn from_labels(clips: Vec<String>, raters: Vec<String>, cells: Vec<Vec<Option<RatingValue>>>) -> Self {
        Self { clips, raters, cells }
    }

    /// Indices of rows with every rater present and no `not_clear`.
    pub fn complete_case_rows(&self) -> Vec<usize> {
        (0..self.clips.len())
            .filter(|&i| self.cells[i].iter().all(|c| matches!(c, Some(RatingValue::Rated(_)))))
            .collect()
    }

    /// Complete-case ratings as interval-scaled 0/1/2 values.
    pub fn complete_case_values(&self) -> Vec<Vec<f64>> {
        self.complete_case_rows()
            .into_iter()
            .map(|i| {
                self.cells[i]
                    .iter()
                    .map(|c| match c {
                        Some(RatingValue::Rated(l)) => l.index() as f64,
                        _ => unreachable!("complete-case row"),
                    })
                    .collect()
            })
            .collect()
    }

    /// Valid (rater index, label) observations of one clip.
    pub fn observations(&self, clip: usize) -> Vec<(usize, ConfidenceLabel)> {
        self.cells[clip]
            .iter()
            .enumerate()
            .filter_map(|(j, c)| match c {
                Some(RatingValue::Rated(l)) => Some((j, *l)),
                _ => None,
            })
            .collect()
    }

    /// Returns a copy with raters reordered by `order`.
    pub fn permute_raters(&self, order: &[usize]) -> Self {
        Self {
            clips: self.clips.clone(),
            raters: order.iter().map(|&j| self.raters[j].clone()).collect(),
            cells: self.cells.iter().map(|row| order.iter().map(|&j| row[j]).collect()).collect(),
        }
    }
}

/// Two-way random-effects, absolute-agreement intraclass correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccResult {
    pub icc_single: f64,
    pub icc_average: f64,
    pub f_stat: f64,
    pub df1: usize,
    pub df2: usize,
    /// 95% interval of the average-measures ICC.
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// 95% interval of the single-measures ICC.
    pub ci95_single_low: f64,
    pub ci95_single_high: f64,
    pub n_used: usize,
    pub raters: usize,
}

/// Mean squares of the two-way ANOVA without replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSquares {
    pub rows: f64,
    pub columns: f64,
    pub error: f64,
}

pub fn two_way_mean_squares(x: &[Vec<f64>]) -> MeanSquares {
    let n = x.len();
    let k = x[0].len();
    let grand = x.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row_means: Vec<f64> = x.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col_means: Vec<f64> = (0..k).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let ssr = k as f64 * row_means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>();
    let ssc = n as f64 * col_means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>();
    let mut sse = 0.0;
    for (i, r) in x.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            let e = v - row_means[i] - col_means[j] + grand;
            sse += e * e;
        }
    }
    MeanSquares {
        rows: ssr / (n - 1) as f64,
        columns: ssc / (k - 1) as f64,
        error: sse / ((n - 1) * (k - 1)) as f64,
    }
}

/// ICC(2,1) and ICC(2,k) on the complete-case submatrix, with the F test
/// of row effects and F-bound confidence intervals (McGraw and Wong).
fn sq(x: f64) -> f64 {
    x * x
}

pub fn icc_2k(matrix: &RaterMatrix) -> Result<IccResult, AnnotationError> {
    let x = matrix.complete_case_values();
    let n = x.len();
    let k = matrix.raters.len();
    if n < 2 || k < 2 {
        return Err(AnnotationError::InsufficientCompleteCases { clips: n, raters: k });
    }
    let ms = two_way_mean_squares(&x);
    let (nf, kf) = (n as f64, k as f64);
    let denom_single = ms.rows + (kf - 1.0) * ms.error + kf * (ms.columns - ms.error) / nf;
    let denom_avg = ms.rows + (ms.columns - ms.error) / nf;
    if denom_single.abs() < 1e-300 || denom_avg.abs() < 1e-300 {
        return Err(AnnotationError::ZeroVariance);
    }
    let icc_single = (ms.rows - ms.error) / denom_single;
    let icc_average = (ms.rows - ms.error) / denom_avg;
    let f_stat = if ms.error > 0.0 { ms.rows / ms.error } else { f64::INFINITY };
    let df1 = n - 1;
    let df2 = (n - 1) * (k - 1);

    let (lo, hi) = if ms.error <= 0.0 || icc_single >= 1.0 {
        (icc_single, icc_single)
    } else {
        let a = kf * icc_single / (nf * (1.0 - icc_single));
        let b = 1.0 + kf * icc_single * (nf - 1.0) / (nf * (1.0 - icc_single));
        let v = sq(a * ms.columns + b * ms.error)
            / (sq(a * ms.columns) / (kf - 1.0) + sq(b * ms.error) / ((nf - 1.0) * (kf - 1.0)));
        let f_lo = f_quantile(0.975, nf - 1.0, v);
        let f_hi = f_quantile(0.975, v, nf - 1.0);
        let c = kf * nf - kf - nf;
        let lo = nf * (ms.rows - f_lo * ms.error) / (f_lo * (kf * ms.columns + c * ms.error) + nf * ms.rows);
        let hi = nf * (f_hi * ms.rows - ms.error) / (kf * ms.columns + c * ms.error + nf * f_hi * ms.rows);
        (lo, hi)
    };
    let spearman_brown = |r: f64| kf * r / (1.0 + (kf - 1.0) * r);
    Ok(IccResult {
        icc_single,
        icc_average,
        f_stat,
        df1,
        df2,
        ci95_low: spearman_brown(lo),
        ci95_high: spearman_brown(hi),
        ci95_single_low: lo,
        ci95_single_high: hi,
        n_used: n,
        raters: k,
    })
}

/// Dawid-Skene estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusLabels {
    pub clips: Vec<String>,
    pub raters: Vec<String>,
    /// Per clip posterior over low/medium/high.
    pub posteriors: Vec<[f64; K]>,
    pub priors: [f64; K],
    /// Per rater, `confusion[true][given]`.
    pub confusions: Vec<[[f64; K]; K]>,
    pub iterations: usize,
    pub converged: bool,
    /// Smoothed (MAP) log-likelihood after each M-step; EM never decreases it.
    pub log_likelihood_trace: Vec<f64>,
}

impl ConsensusLabels {
    pub fn hard_labels(&self) -> Vec<ConfidenceLabel> {
        self.posteriors
            .iter()
            .map(|p| ConfidenceLabel::from_index(crate::math::argmax(p)).expect("three classes"))
            .collect()
    }

    /// Prior-weighted diagonal of a rater's confusion matrix.
    pub fn rater_accuracy(&self, rater: usize) -> f64 {
        (0..K).map(|c| self.priors[c] * self.confusions[rater][c][c]).sum()
    }
}

fn vote_posterior(obs: &[(usize, ConfidenceLabel)]) -> [f64; K] {
    let mut counts = [0usize; K];
    for (_, l) in obs {
        counts[l.index()] += 1;
    }
    let best = *counts.iter().max().unwrap_or(&0);
    let tied = counts.iter().filter(|&&c| c == best).count() as f64;
    let mut p = [0.0; K];
    for c in 0..K {
        if counts[c] == best {
            p[c] = 1.0 / tied;
        }
    }
    p
}

/// Per-clip majority vote; ties go to the lowest tied class.
pub fn majority_vote(matrix: &RaterMatrix) -> Vec<Option<ConfidenceLabel>> {
    (0..matrix.clips.len())
        .map(|i| {
            let obs = matrix.observations(i);
            if obs.is_empty() {
                return None;
            }
            ConfidenceLabel::from_index(crate::math::argmax(&vote_posterior(&obs)))
        })
        .collect()
}

struct DsParams {
    priors: [f64; K],
    confusions: Vec<[[f64; K]; K]>,
}

fn m_step(obs: &[Vec<(usize, ConfidenceLabel)>], post: &[[f64; K]], raters: usize) -> DsParams {
    let n = post.len() as f64;
    let mut priors = [0.0; K];
    for c in 0..K {
        priors[c] = (post.iter().map(|p| p[c]).sum::<f64>() + DS_SMOOTHING) / (n + K as f64 * DS_SMOOTHING);
    }
    let mut counts = vec![[[DS_SMOOTHING; K]; K]; raters];
    for (o, p) in obs.iter().zip(post) {
        for &(j, l) in o {
            for c in 0..K {
                counts[j][c][l.index()] += p[c];
            }
        }
    }
    for m in counts.iter_mut() {
        for row in m.iter_mut() {
            let total: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= total;
            }
        }
    }
    DsParams { priors, confusions: counts }
}

/// E-step posteriors and the smoothed log-likelihood of `params`.
fn e_step(obs: &[Vec<(usize, ConfidenceLabel)>], params: &DsParams) -> (Vec<[f64; K]>, f64) {
    let mut ll = 0.0;
    let post = obs
        .iter()
        .map(|o| {
            let mut logp = [0.0; K];
            for c in 0..K {
                logp[c] = ln(params.priors[c]) + o.iter().map(|&(j, l)| ln(params.confusions[j][c][l.index()])).sum::<f64>();
            }
            let norm = log_sum_exp(&logp);
            ll += norm;
            let mut p = [0.0; K];
            for c in 0..K {
                p[c] = exp(logp[c] - norm);
            }
            p
        })
        .collect();
    // Dirichlet pseudo-count term; makes the tracked objective the one EM ascends.
    let prior_term: f64 = DS_SMOOTHING
        * (params.priors.iter().map(|p| ln(*p)).sum::<f64>()
            + params.confusions.iter().flatten().flatten().map(|v| ln(*v)).sum::<f64>());
    (post, ll + prior_term)
}

/// Expectation-maximization over true-class posteriors and per-rater
/// confusion matrices, initialized from majority vote.
pub fn dawid_skene(matrix: &RaterMatrix, max_iters: usize, tol: f64) -> Result<ConsensusLabels, AnnotationError> {
    let obs: Vec<Vec<(usize, ConfidenceLabel)>> = (0..matrix.clips.len()).map(|i| matrix.observations(i)).collect();
    if let Some(i) = obs.iter().position(Vec::is_empty) {
        return Err(AnnotationError::ClipWithoutValidAnnotations(matrix.clips[i].clone()));
    }
    let raters = matrix.raters.len();
    let mut post: Vec<[f64; K]> = obs.iter().map(|o| vote_posterior(o)).collect();
    let mut params = m_step(&obs, &post, raters);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    // One rater gives EM nothing to reconcile, and the unidentifiable
    // likelihood lets it drift away from that rater's own labels.
    if raters == 1 {
        converged = true;
    }
    while !converged && iterations < max_iters {
        iterations += 1;
        let (next, ll) = e_step(&obs, &params);
        trace.push(ll);
        let delta = post
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        post = next;
        params = m_step(&obs, &post, raters);
        if delta < tol {
            converged = true;
            break;
        }
    }
    Ok(ConsensusLabels {
        clips: matrix.clips.clone(),
        raters: matrix.raters.clone(),
        posteriors: post,
        priors: params.priors,
        confusions: params.confusions,
        iterations,
        converged,
        log_likelihood_trace: trace,
    })
}

/// A consensus label for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusItem {
    pub clip_id: String,
    pub label: ConfidenceLabel,
    pub max_posterior: f64,
    pub ambiguous: bool,
}

/// Argmax label for every clip; low-confidence consensus is flagged, never dropped.
pub fn derive_consensus_dataset(consensus: &ConsensusLabels) -> Vec<ConsensusItem> {
    consensus
        .clips
        .iter()
        .zip(&consensus.posteriors)
        .map(|(id, p)| {
            let best = crate::math::argmax(p);
            ConsensusItem {
                clip_id: id.clone(),
                label: ConfidenceLabel::from_index(best).expect("three classes"),
                max_posterior: p[best],
                ambiguous: p[best] < AMBIGUITY_THRESHOLD,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
