//! Temperature scaling: divide logits by a scalar `T` fitted to minimize
//! negative log-likelihood. Argmax is unchanged for any `T > 0`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{exp, ln, log_sum_exp, softmax_into, sqrt};

/// Search interval for `T`.
pub const T_BOUNDS: (f64, f64) = (0.05, 20.0);
/// Golden-section tolerance on `ln T`.
pub const LOG_T_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("need at least 2 samples with 2 distinct labels")]
    DegenerateLabels,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("row {row} has {got} logits, expected {expected}")]
    RaggedLogits { row: usize, expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{logits} logit rows but {labels} labels")]
    LengthMismatch { logits: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub temperature: f64,
    pub fitted_nll_before: f64,
    pub fitted_nll_after: f64,
}

impl CalibrationModel {
    pub fn identity() -> Self {
        Self { temperature: 1.0, fitted_nll_before: f64::NAN, fitted_nll_after: f64::NAN }
    }

    pub fn apply(&self, logits: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, CalibrationError> {
        apply_temperature(logits, self.temperature)
    }
}

/// Mean negative log-likelihood of `labels` under `softmax(logits / t)`.
pub fn nll_at(logits: &[Vec<f64>], labels: &[usize], t: f64) -> f64 {
    let mut total = 0.0;
    let mut scaled = Vec::new();
    for (row, &y) in logits.iter().zip(labels) {
        scaled.clear();
        scaled.extend(row.iter().map(|z| z / t));
        total += log_sum_exp(&scaled) - scaled[y];
    }
    total / logits.len() as f64
}

fn validate(logits: &[Vec<f64>], labels: &[usize]) -> Result<(), CalibrationError> {
    if logits.len() != labels.len() {
        return Err(CalibrationError::LengthMismatch { logits: logits.len(), labels: labels.len() });
    }
    let classes = logits.first().map_or(0, Vec::len);
    for (row, z) in logits.iter().enumerate() {
        if z.len() != classes {
            return Err(CalibrationError::RaggedLogits { row, expected: classes, got: z.len() });
        }
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(CalibrationError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Fits `T` by golden-section search on `ln T` over [`T_BOUNDS`].
///
/// The result never has a higher NLL than `T = 1` or either bound, which are
/// evaluated explicitly alongside the search optimum.
pub fn fit_temperature(logits: &[Vec<f64>], labels: &[usize]) -> Result<CalibrationModel, CalibrationError> {
    validate(logits, labels)?;
    if labels.len() < 2 || labels.iter().all(|&y| y == labels[0]) {
        return Err(CalibrationError::DegenerateLabels);
    }
    let f = |log_t: f64| nll_at(logits, labels, exp(log_t));
    let (mut a, mut b) = (ln(T_BOUNDS.0), ln(T_BOUNDS.1));
    let inv_phi = (sqrt(5.0) - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > LOG_T_TOLERANCE {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let nll_one = f(0.0);
    let mut best = (0.5 * (a + b), f(0.5 * (a + b)));
    for cand in [0.0, ln(T_BOUNDS.0), ln(T_BOUNDS.1)] {
        let v = f(cand);
        if v < best.1 {
            best = (cand, v);
        }
    }
    let temperature = exp(best.0);
    if (best.0 - ln(T_BOUNDS.0)).abs() < 1e-3 || (best.0 - ln(T_BOUNDS.1)).abs() < 1e-3 {
        log::warn!("fitted temperature {temperature:.4} sits on the search bound");
    }
    Ok(CalibrationModel { temperature, fitted_nll_before: nll_one, fitted_nll_after: best.1 })
}

/// Row-wise `softmax(z / t)`.
pub fn apply_temperature(logits: &[Vec<f64>], t: f64) -> Result<Vec<Vec<f64>>, CalibrationError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(CalibrationError::NonPositiveTemperature(t));
    }
    Ok(logits
        .iter()
        .map(|row| {
            let scaled: Vec<f64> = row.iter().map(|z| z / t).collect();
            let mut p = alloc::vec![0.0; row.len()];
            softmax_into(&scaled, &mut p);
            p
        })
        .collect())
}
