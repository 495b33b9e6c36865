//! Late-fusion classifier: a projection head over fixed utterance
//! embeddings plus a gated MLP over the 94-dimensional feature vector.
//! `fused = embedding_logits + lambda * feature_logits`.


use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, FEATURE_DIM};
use crate::label::ConfidenceLabel;
use crate::neural::{
    cross_entropy, macro_f1, train_loop, weighted_sample, CosineSchedule, EarlyStopping, History, LayerSpec, Matrix,
    MlpModel, Monitor, NeuralError, OptimizerState, SamplerConfig, Trainable, TrainingTask, Validation,
};
use crate::split::stratified_holdout;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HybridError {
    #[error("unknown sample source `{0}`")]
    UnknownSource(String),
    #[error("training input contains held-out id `{0}`")]
    LeakageDetected(String),
    #[error("no training samples")]
    EmptyTrainingSet,
    #[error("sample `{0}` was normalized with statistics the model was not trained on")]
    NormalizerMismatch(String),
    #[error("sample `{0}` has an unnormalized feature vector")]
    NotNormalized(String),
    #[error("sample `{id}` has a {got}-dim embedding, expected {expected}")]
    EmbeddingDim { id: String, expected: usize, got: usize },
    #[error("sample `{0}` has a non-finite embedding value")]
    NonFiniteEmbedding(String),
    #[error("sample `{id}` is tagged {found:?} but was passed as {expected:?}")]
    WrongSource { id: String, expected: Source, found: Source },
    #[error("id `{0}` appears in both ground truth and pseudo data")]
    DuplicateId(String),
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    GroundTruth,
    Pseudo,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::GroundTruth => "ground_truth",
            Source::Pseudo => "pseudo",
        }
    }
}

impl FromStr for Source {
    type Err = HybridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ground_truth" => Ok(Source::GroundTruth),
            "pseudo" => Ok(Source::Pseudo),
            other => Err(HybridError::UnknownSource(other.into())),
        }
    }
}

/// Which streams feed the fused logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Both,
    EmbeddingOnly,
    FeatureOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub lambda_fv: f64,
    pub gt_boost: f64,
    /// Low, medium, high.
    pub class_weights: [f64; 3],
    pub lr_embedding_stream: f64,
    pub lr_feature_stream: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub feature_hidden: [usize; 2],
    pub epochs: usize,
    pub batch_size: usize,
    /// Share of the ground truth held out for model selection.
    pub val_fraction: f64,
    /// Stop after this many epochs without a better validation macro-F1.
    pub patience: Option<usize>,
    pub mode: FusionMode,
    pub seed: u64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            lambda_fv: 0.3,
            gt_boost: 18.0,
            class_weights: [1.0, 1.2, 1.0],
            lr_embedding_stream: 2.5e-5,
            lr_feature_stream: 1e-3,
            weight_decay: 1e-5,
            dropout: 0.3,
            feature_hidden: [128, 64],
            epochs: 30,
            batch_size: 32,
            val_fraction: 0.2,
            patience: None,
            mode: FusionMode::Both,
            seed: 0,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<(), HybridError> {
        if !(self.lambda_fv >= 0.0) {
            return Err(HybridError::InvalidConfig("lambda_fv must be >= 0"));
        }
        if !(self.gt_boost >= 1.0) {
            return Err(HybridError::InvalidConfig("gt_boost must be >= 1"));
        }
        if self.class_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(HybridError::InvalidConfig("class weights must be > 0"));
        }
        if self.batch_size < 2 {
            return Err(HybridError::InvalidConfig("batch size must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(HybridError::InvalidConfig("val_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn feature_specs(&self) -> Vec<LayerSpec> {
        let [h1, h2] = self.feature_hidden;
        vec![
            LayerSpec::sigmoid_gate(FEATURE_DIM),
            LayerSpec::dense(FEATURE_DIM, h1),
            LayerSpec::batch_norm(h1),
            LayerSpec::gelu(h1),
            LayerSpec::dense(h1, h2),
            LayerSpec::batch_norm(h2),
            LayerSpec::gelu(h2),
            LayerSpec::dropout(h2, self.dropout),
            LayerSpec::dense(h2, ConfidenceLabel::COUNT),
        ]
    }
}

/// One training or evaluation item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridSample {
    pub id: String,
    pub features: FeatureVector,
    pub embedding: Vec<f64>,
    pub label: ConfidenceLabel,
    pub source: Source,
}

#[derive(Debug, Clone)]
pub struct HybridModel {
    pub projection: MlpModel,
    pub feature_stream: MlpModel,
    pub lambda_fv: f64,
    pub mode: FusionMode,
    pub emb_dim: usize,
    /// Fingerprint of the normalizer the training features came from.
    pub normalizer_fingerprint: Option<u64>,
}

/// Stream outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutput {
    pub fused: Matrix,
    pub embedding_logits: Matrix,
    pub feature_logits: Matrix,
}

impl HybridModel {
    /// Both streams are initialized from `cfg.seed` through independent
    /// derived seeds, so the projection head starts identical across modes.
    pub fn new(emb_dim: usize, cfg: &HybridConfig) -> Result<Self, HybridError> {
        cfg.validate()?;
        let projection = MlpModel::new(&[LayerSpec::dense(emb_dim, ConfidenceLabel::COUNT)], cfg.seed.wrapping_mul(2).wrapping_add(1))?;
        let feature_stream = MlpModel::new(&cfg.feature_specs(), cfg.seed.wrapping_mul(2).wrapping_add(2))?;
        Ok(Self { projection, feature_stream, lambda_fv: cfg.lambda_fv, mode: cfg.mode, emb_dim, normalizer_fingerprint: None })
    }

    fn uses_embedding(&self) -> bool {
        self.mode != FusionMode::FeatureOnly
    }

    fn uses_features(&self) -> bool {
        self.mode != FusionMode::EmbeddingOnly
    }

    pub fn train(&mut self) {
        self.projection.train();
        self.feature_stream.train();
    }

    pub fn eval(&mut self) {
        self.projection.eval();
        self.feature_stream.eval();
    }

    fn fuse(&self, emb: &Matrix, fv: &Matrix) -> Matrix {
        match self.mode {
            FusionMode::Both => emb.add(&fv.scale(self.lambda_fv)),
            FusionMode::EmbeddingOnly => emb.clone(),
            FusionMode::FeatureOnly => fv.clone(),
        }
    }

    /// Forward pass in the current mode with caches for [`HybridModel::backward`].
    /// An unused stream reports zero logits.
    pub fn forward(&mut self, emb: &Matrix, fv: &Matrix) -> Result<HybridOutput, NeuralError> {
        let e = if self.uses_embedding() { self.projection.forward(emb)? } else { Matrix::zeros(emb.rows, 3) };
        let f = if self.uses_features() { self.feature_stream.forward(fv)? } else { Matrix::zeros(fv.rows, 3) };
        Ok(HybridOutput { fused: self.fuse(&e, &f), embedding_logits: e, feature_logits: f })
    }

    /// Eval-mode forward without side effects.
    pub fn infer(&self, emb: &Matrix, fv: &Matrix) -> Result<HybridOutput, NeuralError> {
        let e = if self.uses_embedding() { self.projection.infer(emb)? } else { Matrix::zeros(emb.rows, 3) };
        let f = if self.uses_features() { self.feature_stream.infer(fv)? } else { Matrix::zeros(fv.rows, 3) };
        Ok(HybridOutput { fused: self.fuse(&e, &f), embedding_logits: e, feature_logits: f })
    }

    /// Backpropagates d loss / d fused into both streams.
    pub fn backward(&mut self, d_fused: &Matrix) -> Result<(), NeuralError> {
        match self.mode {
            FusionMode::Both => {
                self.projection.backward(d_fused)?;
                self.feature_stream.backward(&d_fused.scale(self.lambda_fv))?;
            }
            FusionMode::EmbeddingOnly => {
                self.projection.backward(d_fused)?;
            }
            FusionMode::FeatureOnly => {
                self.feature_stream.backward(d_fused)?;
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.projection.zero_grad();
        self.feature_stream.zero_grad();
    }

    pub fn state_vector(&self) -> Vec<f64> {
        let mut s = self.projection.state_vector();
        s.extend(self.feature_stream.state_vector());
        s
    }

    pub fn load_state_vector(&mut self, state: &[f64]) -> Result<(), NeuralError> {
        let split = self.projection.state_len();
        if state.len() != split + self.feature_stream.state_len() {
            return Err(NeuralError::StateLength { expected: split + self.feature_stream.state_len(), got: state.len() });
        }
        self.projection.load_state_vector(&state[..split])?;
        self.feature_stream.load_state_vector(&state[split..])?;
        Ok(())
    }
}

impl Trainable for HybridModel {
    fn snapshot(&self) -> Vec<f64> {
        self.state_vector()
    }

    fn restore(&mut self, state: &[f64]) -> Result<(), NeuralError> {
        self.load_state_vector(state)
    }
}

/// Per-sample weight: `gt_boost` for ground truth, 1 for pseudo labels.
pub fn source_weights(sources: &[Source], gt_boost: f64) -> Vec<f64> {
    sources.iter().map(|s| if *s == Source::GroundTruth { gt_boost } else { 1.0 }).collect()
}

/// Class- and source-weighted cross-entropy with weighted-mean reduction.
pub fn source_boosted_loss(
    fused: &Matrix,
    labels: &[usize],
    sources: &[Source],
    cfg: &HybridConfig,
) -> Result<(f64, Matrix), NeuralError> {
    let w = source_weights(sources, cfg.gt_boost);
    cross_entropy(fused, labels, &w, &cfg.class_weights)
}

fn embedding_matrix(samples: &[&HybridSample], dim: usize) -> Result<Matrix, HybridError> {
    let mut data = Vec::with_capacity(samples.len() * dim);
    for s in samples {
        if s.embedding.len() != dim {
            return Err(HybridError::EmbeddingDim { id: s.id.clone(), expected: dim, got: s.embedding.len() });
        }
        if s.embedding.iter().any(|v| !v.is_finite()) {
            return Err(HybridError::NonFiniteEmbedding(s.id.clone()));
        }
        data.extend_from_slice(&s.embedding);
    }
    Ok(Matrix::from_vec(samples.len(), dim, data))
}

fn feature_matrix(samples: &[&HybridSample]) -> Matrix {
    Matrix::from_rows(&samples.iter().map(|s| s.features.values()).collect::<Vec<_>>())
}

struct Batches {
    emb: Matrix,
    fv: Matrix,
    labels: Vec<usize>,
    sources: Vec<Source>,
}

impl Batches {
    fn new(samples: &[&HybridSample], dim: usize) -> Result<Self, HybridError> {
        Ok(Self {
            emb: embedding_matrix(samples, dim)?,
            fv: feature_matrix(samples),
            labels: samples.iter().map(|s| s.label.index()).collect(),
            sources: samples.iter().map(|s| s.source).collect(),
        })
    }
}

struct HybridTask<'a> {
    cfg: &'a HybridConfig,
    train: Batches,
    val: Option<Batches>,
    sampler: SamplerConfig,
    emb_opt: OptimizerState,
    fv_opt: OptimizerState,
    emb_sched: CosineSchedule,
    fv_sched: CosineSchedule,
    step: usize,
}

impl HybridTask<'_> {
    fn batches_per_epoch(&self) -> usize {
        self.train.labels.len().div_ceil(self.cfg.batch_size)
    }
}

impl TrainingTask<HybridModel> for HybridTask<'_> {
    fn train_size(&self) -> usize {
        self.train.labels.len()
    }

    fn run_epoch(&mut self, model: &mut HybridModel, epoch: usize) -> Result<(f64, f64), NeuralError> {
        let n = self.train.labels.len();
        let cfg = SamplerConfig { seed: self.sampler.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), ..self.sampler.clone() };
        let order = weighted_sample(&cfg, &self.train.labels, n)?;
        model.train();
        let mut total = 0.0;
        let mut count = 0;
        for chunk in order.chunks(self.cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let total_steps = self.emb_sched.total_steps;
            self.emb_opt.lr = self.emb_sched.lr(self.step.min(total_steps))?;
            self.fv_opt.lr = self.fv_sched.lr(self.step.min(total_steps))?;
            let emb = self.train.emb.select_rows(chunk);
            let fv = self.train.fv.select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| self.train.labels[i]).collect();
            let sources: Vec<Source> = chunk.iter().map(|&i| self.train.sources[i]).collect();
            model.zero_grad();
            let out = model.forward(&emb, &fv)?;
            let (loss, grad) = source_boosted_loss(&out.fused, &labels, &sources, self.cfg)?;
            model.backward(&grad)?;
            if model.uses_embedding() {
                self.emb_opt.step(&mut model.projection.params_mut())?;
            }
            if model.uses_features() {
                self.fv_opt.step(&mut model.feature_stream.params_mut())?;
            }
            self.step += 1;
            total += loss;
            count += 1;
        }
        model.eval();
        Ok((if count > 0 { total / count as f64 } else { f64::NAN }, self.fv_opt.lr))
    }

    fn validate(&mut self, model: &mut HybridModel) -> Result<Option<Validation>, NeuralError> {
        let Some(val) = &self.val else { return Ok(None) };
        let out = model.infer(&val.emb, &val.fv)?;
        let (loss, _) = cross_entropy(&out.fused, &val.labels, &vec![1.0; val.labels.len()], &[1.0; 3])?;
        Ok(Some(Validation { loss, macro_f1: macro_f1(&val.labels, &out.fused.argmax_rows(), 3) }))
    }
}

fn check_inputs(
    gt: &[HybridSample],
    pseudo: &[HybridSample],
    held_out: &BTreeSet<String>,
) -> Result<Option<u64>, HybridError> {
    let mut seen = BTreeSet::new();
    for (samples, expected) in [(gt, Source::GroundTruth), (pseudo, Source::Pseudo)] {
        for s in samples {
            if held_out.contains(&s.id) {
                return Err(HybridError::LeakageDetected(s.id.clone()));
            }
            if s.source != expected {
                return Err(HybridError::WrongSource { id: s.id.clone(), expected, found: s.source });
            }
            if !seen.insert(s.id.as_str()) {
                return Err(HybridError::DuplicateId(s.id.clone()));
            }
        }
    }
    let mut fingerprint = None;
    for s in gt.iter().chain(pseudo) {
        let Some(fp) = s.features.normalized_by else { return Err(HybridError::NotNormalized(s.id.clone())) };
        match fingerprint {
            None => fingerprint = Some(fp),
            Some(f) if f != fp => return Err(HybridError::NormalizerMismatch(s.id.clone())),
            Some(_) => {}
        }
    }
    Ok(fingerprint)
}

/// Trains on ground truth plus pseudo labels.
///
/// A stratified `val_fraction` of the ground truth is held out for model
/// selection; the epoch with the best validation macro-F1 is returned.
/// Batches come from one inverse-frequency sampler over the union, and
/// the two streams have separate AdamW groups with cosine annealing.
pub fn train_hybrid(
    gt: &[HybridSample],
    pseudo: &[HybridSample],
    held_out: &BTreeSet<String>,
    cfg: &HybridConfig,
) -> Result<(HybridModel, History), HybridError> {
    cfg.validate()?;
    if gt.is_empty() && pseudo.is_empty() {
        return Err(HybridError::EmptyTrainingSet);
    }
    let fingerprint = check_inputs(gt, pseudo, held_out)?;
    let emb_dim = gt.iter().chain(pseudo).next().map_or(0, |s| s.embedding.len());

    let gt_labels: Vec<usize> = gt.iter().map(|s| s.label.index()).collect();
    let (train_idx, val_idx) = if cfg.val_fraction > 0.0 {
        stratified_holdout(&gt_labels, cfg.val_fraction, cfg.seed ^ 0x5A17)
    } else {
        ((0..gt.len()).collect(), Vec::new())
    };
    let mut train: Vec<&HybridSample> = train_idx.iter().map(|&i| &gt[i]).collect();
    train.extend(pseudo.iter());
    if train.is_empty() {
        return Err(HybridError::EmptyTrainingSet);
    }
    let val: Vec<&HybridSample> = val_idx.iter().map(|&i| &gt[i]).collect();

    let train = Batches::new(&train, emb_dim)?;
    let val = if val.is_empty() { None } else { Some(Batches::new(&val, emb_dim)?) };
    let sampler = SamplerConfig::from_labels(&train.labels, cfg.seed ^ 0xB417);

    let mut model = HybridModel::new(emb_dim, cfg)?;
    model.normalizer_fingerprint = fingerprint;
    let mut task = HybridTask {
        cfg,
        sampler,
        train,
        val,
        emb_opt: OptimizerState::adamw(cfg.lr_embedding_stream, cfg.weight_decay),
        fv_opt: OptimizerState::adamw(cfg.lr_feature_stream, cfg.weight_decay),
        emb_sched: CosineSchedule::new(cfg.lr_embedding_stream, 0),
        fv_sched: CosineSchedule::new(cfg.lr_feature_stream, 0),
        step: 0,
    };
    let total_steps = cfg.epochs * task.batches_per_epoch();
    task.emb_sched.total_steps = total_steps;
    task.fv_sched.total_steps = total_steps;
    model.feature_stream.reseed_dropout(cfg.seed ^ 0xD80);
    let early = EarlyStopping { monitor: Monitor::ValidationMacroF1, patience: cfg.patience.unwrap_or(usize::MAX) };
    let history = train_loop(&mut model, &mut task, cfg.epochs, Some(early))?;
    model.eval();
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub ids: Vec<String>,
    pub probabilities: Vec<[f64; 3]>,
    pub labels: Vec<ConfidenceLabel>,
}

/// Eval-mode softmax of the fused logits.
pub fn predict(model: &HybridModel, samples: &[HybridSample]) -> Result<Prediction, HybridError> {
    for s in samples {
        match (s.features.normalized_by, model.normalizer_fingerprint) {
            (None, _) => return Err(HybridError::NotNormalized(s.id.clone())),
            (Some(a), Some(b)) if a != b => return Err(HybridError::NormalizerMismatch(s.id.clone())),
            _ => {}
        }
    }
    if samples.is_empty() {
        return Ok(Prediction { ids: Vec::new(), probabilities: Vec::new(), labels: Vec::new() });
    }
    let refs: Vec<&HybridSample> = samples.iter().collect();
    let out = model.infer(&embedding_matrix(&refs, model.emb_dim)?, &feature_matrix(&refs))?;
    let probs = out.fused.softmax_rows();
    let probabilities: Vec<[f64; 3]> = (0..probs.rows).map(|i| [probs.get(i, 0), probs.get(i, 1), probs.get(i, 2)]).collect();
    let labels = probs.argmax_rows().into_iter().map(|k| ConfidenceLabel::from_index(k).expect("3 classes")).collect();
    Ok(Prediction { ids: samples.iter().map(|s| s.id.clone()).collect(), probabilities, labels })
}
