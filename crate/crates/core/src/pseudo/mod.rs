//! The feature-vector labeller and confidence-filtered pseudo labels.
//!
//! The labeller sees only the 94-dimensional feature vectors. Its softmax
//! outputs are temperature-calibrated on its own validation split, and a
//! pool item is kept when its maximum probability reaches `tau`.

#[cfg(test)]
mod tests;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::{apply_temperature, fit_temperature, CalibrationError, CalibrationModel};
use crate::features::{FeatureVector, FEATURE_DIM};
use crate::label::ConfidenceLabel;
use crate::math::{argmax, mean, sample_std};
use crate::neural::{
    macro_f1, train_loop, ClassifierTask, EarlyStopping, History, LayerSpec, Matrix, MlpModel, Monitor, NeuralError,
    OptimizerState, SamplerConfig,
};
use crate::split::{stratified_assign, stratified_holdout};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PseudoError {
    #[error("labeller input contains held-out id `{0}`")]
    LeakageDetected(String),
    #[error("class `{0}` has no training samples")]
    ClassAbsent(ConfidenceLabel),
    #[error("class `{class}` has {count} samples, need at least {needed}")]
    TooFewSamples { class: ConfidenceLabel, count: usize, needed: usize },
    #[error("pool item `{0}` is part of the ground-truth set")]
    PoolOverlapsGroundTruth(String),
    #[error("pseudo set is empty")]
    EmptyPseudoSet,
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("vector `{0}` is not normalized")]
    NotNormalized(String),
    #[error("vector `{0}` was normalized with different statistics")]
    NormalizerMismatch(String),
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabellerConfig {
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub lr: f64,
    /// Internal cross-validation folds for the report; 0 skips it.
    pub internal_folds: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Share of the input held out for early stopping and calibration.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for LabellerConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![128, 64],
            dropout: 0.3,
            lr: 1e-3,
            internal_folds: 5,
            patience: 10,
            max_epochs: 100,
            batch_size: 32,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl LabellerConfig {
    /// Dense → ReLU → Dropout per hidden width, then a 3-way dense head.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut width = FEATURE_DIM;
        for &h in &self.hidden_dims {
            specs.push(LayerSpec::dense(width, h));
            specs.push(LayerSpec::relu(h));
            if self.dropout > 0.0 {
                specs.push(LayerSpec::dropout(h, self.dropout));
            }
            width = h;
        }
        specs.push(LayerSpec::dense(width, ConfidenceLabel::COUNT));
        specs
    }
}

/// A trained labeller bound to the normalizer its inputs came from.
#[derive(Debug, Clone)]
pub struct Labeller {
    pub model: MlpModel,
    pub calibration: CalibrationModel,
    pub normalizer_fingerprint: u64,
    pub train_ids: Vec<String>,
}

impl Labeller {
    fn matrix(&self, vectors: &[FeatureVector]) -> Result<Matrix, PseudoError> {
        for fv in vectors {
            match fv.normalized_by {
                None => return Err(PseudoError::NotNormalized(fv.id.clone())),
                Some(f) if f != self.normalizer_fingerprint => return Err(PseudoError::NormalizerMismatch(fv.id.clone())),
                Some(_) => {}
            }
        }
        Ok(Matrix::from_rows(&vectors.iter().map(FeatureVector::values).collect::<Vec<_>>()))
    }

    pub fn logits(&self, vectors: &[FeatureVector]) -> Result<Vec<Vec<f64>>, PseudoError> {
        if vectors.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.model.infer(&self.matrix(vectors)?)?.to_rows())
    }

    /// Class probabilities, temperature-scaled when `calibrated`.
    pub fn probabilities(&self, vectors: &[FeatureVector], calibrated: bool) -> Result<Vec<Vec<f64>>, PseudoError> {
        let t = if calibrated { self.calibration.temperature } else { 1.0 };
        Ok(apply_temperature(&self.logits(vectors)?, t)?)
    }

    /// SHA-256 over the model state, the temperature and the normalizer
    /// fingerprint, as lowercase hex.
    pub fn checkpoint_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.model.state_vector() {
            h.update(v.to_le_bytes());
        }
        h.update(self.calibration.temperature.to_le_bytes());
        h.update(self.normalizer_fingerprint.to_le_bytes());
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub macro_f1: f64,
    /// Low, medium, high.
    pub per_class_f1: [f64; 3],
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabellerReport {
    pub folds: Vec<FoldScore>,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub mean_per_class_f1: [f64; 3],
    pub final_history: History,
    pub temperature: f64,
}

pub(crate) fn per_class_f1(labels: &[usize], preds: &[usize]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let tp = labels.iter().zip(preds).filter(|&(&y, &p)| y == c && p == c).count();
        let denom = labels.iter().filter(|&&y| y == c).count() + preds.iter().filter(|&&p| p == c).count();
        *o = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    }
    out
}

fn fit_one(x: &Matrix, y: &[usize], cfg: &LabellerConfig, seed: u64) -> Result<(MlpModel, History, Vec<usize>), PseudoError> {
    let (train, val) = stratified_holdout(y, cfg.val_fraction, seed);
    let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let y_val: Vec<usize> = val.iter().map(|&i| y[i]).collect();
    let mut task = ClassifierTask::new(x.select_rows(&train), y_train, OptimizerState::adam(cfg.lr), cfg.batch_size, seed)
        .with_validation(x.select_rows(&val), y_val);
    task.balanced_sampling = true;
    let mut model = MlpModel::new(&cfg.layer_specs(), seed)?;
    let early = EarlyStopping { monitor: Monitor::ValidationLoss, patience: cfg.patience };
    let history = train_loop(&mut model, &mut task, cfg.max_epochs, Some(early))?;
    model.eval();
    Ok((model, history, val))
}

/// Trains the labeller on normalized ground-truth vectors.
///
/// `held_out` holds the ids that must not be seen (the fold's test clips).
/// With `internal_folds >= 2` a stratified internal cross-validation is
/// scored first. The returned model is trained on a stratified split of all
/// inputs; its holdout drives early stopping and the temperature fit.
pub fn train_labeller(
    features: &[FeatureVector],
    labels: &[ConfidenceLabel],
    held_out: &BTreeSet<String>,
    cfg: &LabellerConfig,
) -> Result<(Labeller, LabellerReport), PseudoError> {
    if features.len() != labels.len() {
        return Err(PseudoError::LengthMismatch { features: features.len(), labels: labels.len() });
    }
    if let Some(fv) = features.iter().find(|f| held_out.contains(&f.id)) {
        return Err(PseudoError::LeakageDetected(fv.id.clone()));
    }
    let fingerprint = match features.first().and_then(|f| f.normalized_by) {
        Some(fp) => fp,
        None => return Err(PseudoError::NotNormalized(features.first().map(|f| f.id.clone()).unwrap_or_default())),
    };
    if let Some(fv) = features.iter().find(|f| f.normalized_by != Some(fingerprint)) {
        return Err(match fv.normalized_by {
            None => PseudoError::NotNormalized(fv.id.clone()),
            Some(_) => PseudoError::NormalizerMismatch(fv.id.clone()),
        });
    }
    let needed = cfg.internal_folds.max(2);
    for class in ConfidenceLabel::ALL {
        let count = labels.iter().filter(|&&l| l == class).count();
        if count == 0 {
            return Err(PseudoError::ClassAbsent(class));
        }
        if count < needed {
            return Err(PseudoError::TooFewSamples { class, count, needed });
        }
    }

    let x = Matrix::from_rows(&features.iter().map(FeatureVector::values).collect::<Vec<_>>());
    let y: Vec<usize> = labels.iter().map(|l| l.index()).collect();

    let mut folds = Vec::new();
    if cfg.internal_folds >= 2 {
        let assign = stratified_assign(&y, cfg.internal_folds, cfg.seed);
        for fold in 0..cfg.internal_folds {
            let train: Vec<usize> = (0..y.len()).filter(|&i| assign[i] != fold).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| assign[i] == fold).collect();
            let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let seed = cfg.seed.wrapping_add(1 + fold as u64);
            let (model, history, _) = fit_one(&x.select_rows(&train), &y_train, cfg, seed)?;
            let preds = model.infer(&x.select_rows(&test))?.argmax_rows();
            let y_test: Vec<usize> = test.iter().map(|&i| y[i]).collect();
            folds.push(FoldScore {
                fold,
                macro_f1: macro_f1(&y_test, &preds, 3),
                per_class_f1: per_class_f1(&y_test, &preds),
                epochs_run: history.epochs.len(),
            });
        }
    }

    let (model, final_history, val) = fit_one(&x, &y, cfg, cfg.seed)?;
    let val_logits = model.infer(&x.select_rows(&val))?.to_rows();
    let val_labels: Vec<usize> = val.iter().map(|&i| y[i]).collect();
    let calibration = fit_temperature(&val_logits, &val_labels)?;

    let f1s: Vec<f64> = folds.iter().map(|f| f.macro_f1).collect();
    let mut mean_per_class_f1 = [0.0; 3];
    for (c, m) in mean_per_class_f1.iter_mut().enumerate() {
        *m = mean(&folds.iter().map(|f| f.per_class_f1[c]).collect::<Vec<_>>());
    }
    let report = LabellerReport {
        mean_macro_f1: mean(&f1s),
        std_macro_f1: sample_std(&f1s),
        mean_per_class_f1,
        folds,
        final_history,
        temperature: calibration.temperature,
    };
    let labeller = Labeller {
        model,
        calibration,
        normalizer_fingerprint: fingerprint,
        train_ids: features.iter().map(|f| f.id.clone()).collect(),
    };
    Ok((labeller, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelConfig {
    pub tau: f64,
    pub calibrate_before_filter: bool,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self { tau: 0.8, calibrate_before_filter: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSample {
    pub clip_id: String,
    pub label: ConfidenceLabel,
    pub max_prob: f64,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSet {
    pub samples: Vec<PseudoSample>,
    /// Labeller checkpoint hash.
    pub provenance: String,
    pub tau: f64,
    pub pool_size: usize,
    pub retained: usize,
    pub fold: usize,
}

impl PseudoSet {
    pub fn class_histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for s in &self.samples {
            h[s.label.index()] += 1;
        }
        h
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.samples.iter().map(|s| s.clip_id.clone()).collect()
    }

    pub fn mean_max_prob(&self) -> f64 {
        mean(&self.samples.iter().map(|s| s.max_prob).collect::<Vec<_>>())
    }
}

/// Keeps the indices whose maximum probability is at least `tau`.
pub fn retain_confident(probabilities: &[Vec<f64>], tau: f64) -> Vec<usize> {
    probabilities
        .iter()
        .enumerate()
        .filter(|(_, p)| p.iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= tau)
        .map(|(i, _)| i)
        .collect()
}

/// Scores the pool and keeps items whose maximum (by default calibrated)
/// probability reaches `cfg.tau`.
pub fn generate_pseudo_labels(
    labeller: &Labeller,
    pool: &[FeatureVector],
    ground_truth_ids: &BTreeSet<String>,
    fold: usize,
    cfg: &PseudoLabelConfig,
) -> Result<PseudoSet, PseudoError> {
    if !(0.0..=1.0).contains(&cfg.tau) {
        return Err(PseudoError::InvalidTau(cfg.tau));
    }
    if let Some(fv) = pool.iter().find(|f| ground_truth_ids.contains(&f.id)) {
        return Err(PseudoError::PoolOverlapsGroundTruth(fv.id.clone()));
    }
    let probs = labeller.probabilities(pool, cfg.calibrate_before_filter)?;
    let samples: Vec<PseudoSample> = retain_confident(&probs, cfg.tau)
        .into_iter()
        .map(|i| {
            let k = argmax(&probs[i]);
            PseudoSample {
                clip_id: pool[i].id.clone(),
                label: ConfidenceLabel::from_index(k).expect("3 classes"),
                max_prob: probs[i][k],
                fold,
            }
        })
        .collect();
    debug_assert!(samples.iter().all(|s| s.max_prob >= cfg.tau));
    let set = PseudoSet {
        retained: samples.len(),
        samples,
        provenance: labeller.checkpoint_hash(),
        tau: cfg.tau,
        pool_size: pool.len(),
        fold,
    };
    log::info!("fold {fold}: kept {} of {} pool items at tau {}", set.retained, set.pool_size, cfg.tau);
    Ok(set)
}

/// Inverse-frequency sampler over the retained set. Nothing is dropped; an
/// absent class only produces a warning.
pub fn pseudo_class_balance(pseudo: &PseudoSet, seed: u64) -> Result<SamplerConfig, PseudoError> {
    if pseudo.samples.is_empty() {
        return Err(PseudoError::EmptyPseudoSet);
    }
    let labels: Vec<usize> = pseudo.samples.iter().map(|s| s.label.index()).collect();
    let cfg = SamplerConfig::from_labels(&labels, seed);
    for class in ConfidenceLabel::ALL {
        if !cfg.class_counts.contains_key(&class.index()) {
            log::warn!("pseudo set for fold {} has no `{class}` samples", pseudo.fold);
        }
    }
    Ok(cfg)
}
