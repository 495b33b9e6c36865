//! Core algorithms for semi-supervised speech-confidence classification.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (an allocator is required). File formats, the CLI
//! and the annotation HTTP API live in the `vocalconf` companion crate.
//!
//! Pipeline, in order of use:
//!
//! - [`audio`]: resampling, peak normalization and spectral-gating denoise.
//! - [`features`]: frame-level descriptors, the 88 prosodic functionals and
//!   the 94-dimensional feature vector with its z-score normalizer.
//! - [`annotation`]: rater matrices, ICC(2,k) and Dawid-Skene consensus.
//! - [`neural`]: a small MLP stack with hand-written backpropagation.
//! - [`calibration`]: temperature scaling.
//! - [`pseudo`]: the feature-vector labeller and confidence-filtered pseudo labels.
//! - [`hybrid`]: the late-fusion embedding + feature-vector classifier.
//! - [`evaluation`]: fold plans, metrics, leakage audits, cross-validation arms
//!   and permutation importance.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod annotation;
pub mod audio;
pub mod calibration;
pub mod dsp;
pub mod evaluation;
pub mod features;
pub mod hybrid;
pub mod label;
pub mod math;
pub mod neural;
pub mod pseudo;
pub mod rng;
pub mod special;
pub mod split;
pub mod synthetic;

pub use label::ConfidenceLabel;
