//! A small MLP stack with hand-written backpropagation: layers, weighted
//! cross-entropy, Adam/AdamW, cosine annealing, class-balanced sampling,
//! early stopping and a finite-difference gradient checker.

mod gradcheck;
mod layers;
mod loss;
mod matrix;
mod model;
mod optim;
mod sampler;
mod schedule;
mod train;


use thiserror::Error;

pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{Layer, LayerKind, LayerSpec, Param, BN_EPS, BN_MOMENTUM};
pub use loss::cross_entropy;
pub use matrix::Matrix;
pub use model::MlpModel;
pub use optim::{OptimizerKind, OptimizerState};
pub use sampler::{weighted_sample, SamplerConfig};
pub use schedule::CosineSchedule;
pub use train::{
    macro_f1, train_loop, ClassifierTask, EarlyStopping, EpochRecord, History, Monitor, Trainable, TrainingTask, Validation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("expected input width {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("batch norm in train mode needs at least 2 rows, got {0}")]
    BatchTooSmallForBatchNorm(usize),
    #[error("invalid layer spec: {0}")]
    InvalidSpec(&'static str),
    #[error("layer {index} takes width {expected} but the previous layer emits {got}")]
    BrokenChain { index: usize, expected: usize, got: usize },
    #[error("backward called without a cached forward pass")]
    NoForwardCache,
    #[error("all sample weights are zero")]
    AllWeightsZero,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("negative or non-finite weight {0}")]
    InvalidWeight(f64),
    #[error("{what}: expected {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("parameter {index} has {got} values, optimizer moments have {expected}")]
    ShapeMismatch { index: usize, expected: usize, got: usize },
    #[error("step {step} outside schedule of {total} steps")]
    StepOutOfRange { step: usize, total: usize },
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("state vector has {got} values, model needs {expected}")]
    StateLength { expected: usize, got: usize },
}
