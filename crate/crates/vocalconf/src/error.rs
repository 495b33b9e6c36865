use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use vocalconf_core::annotation::AnnotationError;
use vocalconf_core::audio::AudioError;
use vocalconf_core::calibration::CalibrationError;
use vocalconf_core::evaluation::EvalError;
use vocalconf_core::features::FeatureError;
use vocalconf_core::hybrid::HybridError;
use vocalconf_core::neural::NeuralError;
use vocalconf_core::pseudo::PseudoError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Wav { path: PathBuf, source: hound::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("clip `{id}`: {message}")]
    Clip { id: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Pseudo(#[from] PseudoError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Self::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn parse(path: impl AsRef<Path>, line: usize, message: impl Into<String>) -> Self {
        Self::Parse { path: path.as_ref().to_path_buf(), line, message: message.into() }
    }

    pub fn format(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Self::Format { path: path.as_ref().to_path_buf(), message: message.into() }
    }

    pub fn json(path: impl AsRef<Path>, source: serde_json::Error) -> Self {
        Self::Json { path: path.as_ref().to_path_buf(), source }
    }

    /// Short machine-readable category for stderr lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Wav { .. } => "wav",
            Error::Json { .. } => "json",
            Error::Format { .. } => "format",
            Error::Config { .. } => "config",
            Error::Manifest(_) => "manifest",
            Error::Clip { .. } => "clip",
            Error::Usage(_) => "usage",
            Error::Audio(_) => "audio",
            Error::Feature(_) => "feature",
            Error::Annotation(_) => "annotation",
            Error::Calibration(_) => "calibration",
            Error::Neural(_) => "neural",
            Error::Pseudo(_) => "pseudo",
            Error::Hybrid(_) => "hybrid",
            Error::Eval(EvalError::AuditFailed(_)) => "audit",
            Error::Eval(_) => "evaluation",
        }
    }

    /// 1 for bad inputs (flags, files, ids, leakage), 2 for failures while
    /// running a stage on valid inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 1,
            Error::Io { .. } => 2,
            Error::Neural(_) => 2,
            Error::Eval(EvalError::Neural(_)) => 2,
            Error::Hybrid(HybridError::Neural(_)) | Error::Pseudo(PseudoError::Neural(_)) => 2,
            _ => 1,
        }
    }
}
