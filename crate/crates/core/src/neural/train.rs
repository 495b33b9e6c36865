use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{cross_entropy, weighted_sample, CosineSchedule, Matrix, MlpModel, NeuralError, OptimizerState, SamplerConfig};
use crate::rng::SeededRng;

/// Anything whose full state can be captured and restored.
pub trait Trainable {
    fn snapshot(&self) -> Vec<f64>;
    fn restore(&mut self, state: &[f64]) -> Result<(), NeuralError>;
}

impl Trainable for MlpModel {
    fn snapshot(&self) -> Vec<f64> {
        self.state_vector()
    }

    fn restore(&mut self, state: &[f64]) -> Result<(), NeuralError> {
        self.load_state_vector(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub loss: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Lower is better.
    ValidationLoss,
    /// Higher is better.
    ValidationMacroF1,
}

impl Monitor {
    fn score(self, v: &Validation) -> f64 {
        match self {
            Monitor::ValidationLoss => -v.loss,
            Monitor::ValidationMacroF1 => v.macro_f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub monitor: Monitor,
    pub patience: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
    pub validation: Option<Validation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (1-based).
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// One training problem: data, optimizer and schedule for a model type.
pub trait TrainingTask<M> {
    fn train_size(&self) -> usize;
    /// Runs one epoch. Returns (mean training loss, learning rate at epoch end).
    fn run_epoch(&mut self, model: &mut M, epoch: usize) -> Result<(f64, f64), NeuralError>;
    /// Scores the validation split, if the task has one.
    fn validate(&mut self, model: &mut M) -> Result<Option<Validation>, NeuralError>;
}

/// Trains for up to `epochs` epochs. With validation available, the best
/// epoch under `early.monitor` is tracked and restored at the end, and
/// training stops after `early.patience` epochs without strict improvement.
pub fn train_loop<M: Trainable, T: TrainingTask<M>>(
    model: &mut M,
    task: &mut T,
    epochs: usize,
    early: Option<EarlyStopping>,
) -> Result<History, NeuralError> {
    let mut history = History::default();
    if epochs == 0 {
        return Ok(history);
    }
    if task.train_size() == 0 {
        return Err(NeuralError::EmptyTrainingSet);
    }
    let monitor = early.map_or(Monitor::ValidationLoss, |e| e.monitor);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut since_best = 0;
    for epoch in 1..=epochs {
        let (train_loss, lr) = task.run_epoch(model, epoch)?;
        let validation = task.validate(model)?;
        history.epochs.push(EpochRecord { epoch, train_loss, lr, validation });
        let Some(v) = validation else { continue };
        let score = monitor.score(&v);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.snapshot()));
            since_best = 0;
        } else {
            since_best += 1;
            if early.is_some_and(|e| since_best >= e.patience) {
                history.stopped_early = epoch < epochs;
                log::debug!("early stop at epoch {epoch}");
                break;
            }
        }
    }
    match best {
        Some((_, epoch, state)) => {
            model.restore(&state)?;
            history.best_epoch = Some(epoch);
        }
        None => history.best_epoch = history.epochs.last().map(|r| r.epoch),
    }
    Ok(history)
}

/// Unweighted mean over `classes` of per-class F1; a class with a zero
/// precision + recall denominator scores 0.
pub fn macro_f1(labels: &[usize], preds: &[usize], classes: usize) -> f64 {
    if classes == 0 {
        return 0.0;
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&y, &p) in labels.iter().zip(preds) {
        if y == p {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let total: f64 = (0..classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 { 0.0 } else { 2.0 * tp[c] as f64 / denom as f64 }
        })
        .sum();
    total / classes as f64
}

/// Supervised classification with an [`MlpModel`] emitting logits.
#[derive(Debug, Clone)]
pub struct ClassifierTask {
    pub x_train: Matrix,
    pub y_train: Vec<usize>,
    pub x_val: Option<Matrix>,
    pub y_val: Vec<usize>,
    pub class_weights: Vec<f64>,
    pub optimizer: OptimizerState,
    pub schedule: Option<CosineSchedule>,
    pub batch_size: usize,
    /// Draw each epoch's samples with the inverse-frequency sampler instead
    /// of a plain shuffle.
    pub balanced_sampling: bool,
    pub seed: u64,
    step: usize,
}

impl ClassifierTask {
    pub fn new(x_train: Matrix, y_train: Vec<usize>, optimizer: OptimizerState, batch_size: usize, seed: u64) -> Self {
        Self {
            x_train,
            y_train,
            x_val: None,
            y_val: Vec::new(),
            class_weights: Vec::new(),
            optimizer,
            schedule: None,
            batch_size: batch_size.max(1),
            balanced_sampling: false,
            seed,
            step: 0,
        }
    }

    pub fn with_validation(mut self, x_val: Matrix, y_val: Vec<usize>) -> Self {
        self.x_val = Some(x_val);
        self.y_val = y_val;
        self
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.y_train.len().div_ceil(self.batch_size)
    }

    fn class_weights_for(&self, classes: usize) -> Vec<f64> {
        if self.class_weights.len() == classes { self.class_weights.clone() } else { vec![1.0; classes] }
    }
}

impl TrainingTask<MlpModel> for ClassifierTask {
    fn train_size(&self) -> usize {
        self.y_train.len()
    }

    fn run_epoch(&mut self, model: &mut MlpModel, epoch: usize) -> Result<(f64, f64), NeuralError> {
        let n = self.y_train.len();
        let order = if self.balanced_sampling {
            let cfg = SamplerConfig::from_labels(&self.y_train, self.seed ^ (epoch as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
            weighted_sample(&cfg, &self.y_train, n)?
        } else {
            SeededRng::derived(self.seed, epoch as u64).permutation(n)
        };
        let classes = model.output_dim();
        let cw = self.class_weights_for(classes);
        model.train();
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.batch_size) {
            // A trailing single row cannot be batch-normalized.
            if chunk.len() < 2 && model.has_batch_norm() {
                continue;
            }
            if let Some(s) = &self.schedule {
                self.optimizer.lr = s.lr(self.step.min(s.total_steps))?;
            }
            let xb = self.x_train.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| self.y_train[i]).collect();
            model.zero_grad();
            let logits = model.forward(&xb)?;
            let (loss, grad) = cross_entropy(&logits, &yb, &vec![1.0; yb.len()], &cw)?;
            model.backward(&grad)?;
            self.optimizer.step(&mut model.params_mut())?;
            self.step += 1;
            loss_sum += loss;
            batches += 1;
        }
        model.eval();
        Ok((if batches > 0 { loss_sum / batches as f64 } else { f64::NAN }, self.optimizer.lr))
    }

    fn validate(&mut self, model: &mut MlpModel) -> Result<Option<Validation>, NeuralError> {
        let Some(x_val) = &self.x_val else { return Ok(None) };
        if self.y_val.is_empty() {
            return Ok(None);
        }
        let logits = model.infer(x_val)?;
        let classes = model.output_dim();
        let (loss, _) = cross_entropy(&logits, &self.y_val, &vec![1.0; self.y_val.len()], &vec![1.0; classes])?;
        let f1 = macro_f1(&self.y_val, &logits.argmax_rows(), classes);
        Ok(Some(Validation { loss, macro_f1: f1 }))
    }
}
