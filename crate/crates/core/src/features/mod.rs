//! Prosodic feature extraction and the 94-dimensional feature vector.
//!
//! A vector is the 88 prosodic functionals (layout order) followed by five
//! calibrated disfluency probabilities (block, prolongation, interjection,
//! word repetition, sound repetition) and one stress probability.

mod functionals;
mod lld;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use functionals::{apply_functionals, FeatureLayout, Functionals, CANONICAL_LAYOUT, PROSODIC_DIM, SEMITONE_REF_HZ};
pub use lld::{compute_llds, FrameConfig, LldSeries, VOICING_CLARITY};

use crate::audio::AudioClip;
use crate::math::sqrt;

pub const DISFLUENCY_DIM: usize = 5;
pub const AUX_DIM: usize = DISFLUENCY_DIM + 1;
pub const FEATURE_DIM: usize = PROSODIC_DIM + AUX_DIM;
pub const STD_FLOOR: f64 = 1e-8;

/// Disfluency probability names in vector order.
pub const DISFLUENCY_NAMES: [&str; DISFLUENCY_DIM] = ["block", "prolongation", "interjection", "word_repetition", "sound_repetition"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("clip has {len} samples, needs at least {needed}")]
    ClipTooShort { len: usize, needed: usize },
    #[error("clip sample rate {0} Hz is not the canonical 16000 Hz")]
    NonCanonicalRate(u32),
    #[error("invalid frame config: {0}")]
    InvalidFrameConfig(&'static str),
    #[error("layout slot `{0}` cannot be computed by this extractor")]
    UnfilledSlot(String),
    #[error("layout slot `{0}` appears twice")]
    DuplicateSlot(String),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("probability `{name}` = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("non-finite value in slot {0}")]
    NonFiniteValue(usize),
    #[error("vector `{0}` is already normalized")]
    DoubleNormalization(String),
    #[error("normalizer needs at least 2 training vectors, got {0}")]
    EmptyTrainingSet(usize),
}

/// The 94-dimensional per-clip feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub prosodic: Vec<f64>,
    pub disfluency: [f64; DISFLUENCY_DIM],
    pub stress: f64,
    /// Fingerprint of the normalizer that produced this vector, if any.
    pub normalized_by: Option<u64>,
}

impl FeatureVector {
    pub fn is_normalized(&self) -> bool {
        self.normalized_by.is_some()
    }

    /// All 94 values in order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.extend_from_slice(&self.prosodic);
        v.extend_from_slice(&self.disfluency);
        v.push(self.stress);
        v
    }

    fn from_values(id: String, values: &[f64], normalized_by: Option<u64>) -> Self {
        let mut disfluency = [0.0; DISFLUENCY_DIM];
        disfluency.copy_from_slice(&values[PROSODIC_DIM..PROSODIC_DIM + DISFLUENCY_DIM]);
        Self {
            id,
            prosodic: values[..PROSODIC_DIM].to_vec(),
            disfluency,
            stress: values[FEATURE_DIM - 1],
            normalized_by,
        }
    }

    /// Rebuilds a vector from 94 raw values, e.g. a feature-store row.
    pub fn from_raw(id: impl Into<String>, values: &[f64]) -> Result<Self, FeatureError> {
        if values.len() != FEATURE_DIM {
            return Err(FeatureError::DimensionMismatch { expected: FEATURE_DIM, got: values.len() });
        }
        assemble_feature_vector(
            id,
            &values[..PROSODIC_DIM],
            &values[PROSODIC_DIM..PROSODIC_DIM + DISFLUENCY_DIM],
            values[FEATURE_DIM - 1],
        )
    }
}

/// Concatenates prosodic functionals with the auxiliary probabilities.
pub fn assemble_feature_vector(
    id: impl Into<String>,
    prosodic: &[f64],
    disfluency: &[f64],
    stress: f64,
) -> Result<FeatureVector, FeatureError> {
    if prosodic.len() != PROSODIC_DIM {
        return Err(FeatureError::DimensionMismatch { expected: PROSODIC_DIM, got: prosodic.len() });
    }
    if disfluency.len() != DISFLUENCY_DIM {
        return Err(FeatureError::DimensionMismatch { expected: DISFLUENCY_DIM, got: disfluency.len() });
    }
    for (name, &p) in DISFLUENCY_NAMES.iter().zip(disfluency).chain(core::iter::once((&"stress", &stress))) {
        if !(0.0..=1.0).contains(&p) {
            return Err(FeatureError::ProbabilityOutOfRange { name, value: p });
        }
    }
    if let Some(i) = prosodic.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFiniteValue(i));
    }
    let mut d = [0.0; DISFLUENCY_DIM];
    d.copy_from_slice(disfluency);
    Ok(FeatureVector { id: id.into(), prosodic: prosodic.to_vec(), disfluency: d, stress, normalized_by: None })
}

/// LLDs followed by the canonical functionals.
/// Names of the 94 vector slots: layout slots, then `disfluency_<name>`
/// and `stress`.
pub fn feature_names() -> Vec<String> {
    let mut names = FeatureLayout::canonical().slots;
    names.extend(DISFLUENCY_NAMES.iter().map(|n| alloc::format!("disfluency_{n}")));
    names.push("stress".into());
    names
}

pub fn extract_prosodic(clip: &AudioClip, cfg: &FrameConfig) -> Result<Functionals, FeatureError> {
    let llds = compute_llds(clip, cfg)?;
    apply_functionals(&llds, &FeatureLayout::canonical())
}

/// Per-dimension z-score statistics fitted on a training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Ids of the vectors the statistics came from, kept for leakage audits.
    pub fit_ids: Vec<String>,
}

impl Normalizer {
    /// Fits population mean/std per dimension; std is floored at [`STD_FLOOR`].
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Self, FeatureError> {
        let mut rows = Vec::new();
        let mut fit_ids = Vec::new();
        for fv in train {
            if fv.is_normalized() {
                return Err(FeatureError::DoubleNormalization(fv.id.clone()));
            }
            rows.push(fv.values());
            fit_ids.push(fv.id.clone());
        }
        if rows.len() < 2 {
            return Err(FeatureError::EmptyTrainingSet(rows.len()));
        }
        let n = rows.len() as f64;
        let mut mean = alloc::vec![0.0; FEATURE_DIM];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = alloc::vec![0.0; FEATURE_DIM];
        for r in &rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in std.iter_mut() {
            *s = sqrt(*s).max(STD_FLOOR);
        }
        Ok(Self { mean, std, fit_ids })
    }

    /// Stable 64-bit fingerprint of the statistics (FNV-1a over the f64 bits).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.mean.iter().chain(&self.std) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn apply(&self, fv: &FeatureVector) -> Result<FeatureVector, FeatureError> {
        if fv.is_normalized() {
            return Err(FeatureError::DoubleNormalization(fv.id.clone()));
        }
        let z: Vec<f64> = fv.values().iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect();
        Ok(FeatureVector::from_values(fv.id.clone(), &z, Some(self.fingerprint())))
    }
}
