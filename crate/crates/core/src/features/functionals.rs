//! Statistical functionals over LLD contours and the "egemaps-lite-88" layout.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::lld::{LldSeries, RMS_FLOOR_DB};
use super::FeatureError;
use crate::math::{abs, log10, mean, percentile_sorted, sqrt};

/// Reference frequency for semitone pitch values.
pub const SEMITONE_REF_HZ: f64 = 27.5;
pub const PROSODIC_DIM: usize = 88;
pub const CANONICAL_LAYOUT: &str = "egemaps-lite-88";
/// Denominator floor for coefficients of variation.
const COV_FLOOR: f64 = 1e-3;

/// Contour functionals applied to every "full" descriptor, in slot order.
const CONTOUR_FUNCTIONALS: [&str; 10] = [
    "mean",
    "cov",
    "p20",
    "p50",
    "p80",
    "range_20_80",
    "rising_slope_mean",
    "rising_slope_std",
    "falling_slope_mean",
    "falling_slope_std",
];

/// Descriptors summarized by the full contour set; `true` marks voiced-only.
const CONTOUR_DESCRIPTORS: [(&str, bool); 6] = [
    ("f0_semitone", true),
    ("loudness_db", false),
    ("hnr_db", true),
    ("alpha_ratio", false),
    ("slope_0_500", false),
    ("slope_500_1500", false),
];

/// Ordered slot names of a feature layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub name: String,
    pub slots: Vec<String>,
}

impl FeatureLayout {
    /// The frozen 88-slot canonical layout.
    pub fn canonical() -> Self {
        let mut slots = Vec::with_capacity(PROSODIC_DIM);
        for (lld, _) in CONTOUR_DESCRIPTORS {
            for f in CONTOUR_FUNCTIONALS {
                slots.push(alloc::format!("{lld}_{f}"));
            }
        }
        for k in 1..=4 {
            slots.push(alloc::format!("mfcc{k}_mean"));
            slots.push(alloc::format!("mfcc{k}_std"));
        }
        for s in ["jitter_local_mean", "jitter_local_cov", "shimmer_local_mean", "shimmer_local_cov"] {
            slots.push(s.to_string());
        }
        for s in [
            "loudness_db_voiced_mean",
            "loudness_db_unvoiced_mean",
            "alpha_ratio_unvoiced_mean",
            "slope_0_500_unvoiced_mean",
            "slope_500_1500_unvoiced_mean",
        ] {
            slots.push(s.to_string());
        }
        for k in 1..=4 {
            slots.push(alloc::format!("mfcc{k}_voiced_mean"));
        }
        for s in [
            "loudness_peaks_per_sec",
            "voiced_segments_per_sec",
            "voiced_segment_len_mean",
            "voiced_segment_len_std",
            "unvoiced_segment_len_mean",
            "unvoiced_segment_len_std",
            "equivalent_sound_level_db",
        ] {
            slots.push(s.to_string());
        }
        debug_assert_eq!(slots.len(), PROSODIC_DIM);
        Self { name: CANONICAL_LAYOUT.to_string(), slots }
    }

    pub fn custom(name: impl Into<String>, slots: Vec<String>) -> Result<Self, FeatureError> {
        let mut seen = alloc::collections::BTreeSet::new();
        for s in &slots {
            if !seen.insert(s.as_str()) {
                return Err(FeatureError::DuplicateSlot(s.clone()));
            }
        }
        Ok(Self { name: name.into(), slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Output of [`apply_functionals`].
#[derive(Debug, Clone, PartialEq)]
pub struct Functionals {
    pub values: Vec<f64>,
    /// Set when the clip had no voiced frames; voiced-only slots are then 0.
    pub no_voiced_frames: bool,
}

/// Fills every layout slot from the descriptor series.
///
/// A slot the extractor does not know is a hard error. Voiced-only slots of
/// a fully unvoiced clip are set to 0 and [`Functionals::no_voiced_frames`] is raised.
pub fn apply_functionals(llds: &LldSeries, layout: &FeatureLayout) -> Result<Functionals, FeatureError> {
    let table = all_functionals(llds);
    let values = layout
        .slots
        .iter()
        .map(|slot| table.get(slot.as_str()).copied().ok_or_else(|| FeatureError::UnfilledSlot(slot.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Functionals { values, no_voiced_frames: llds.voiced_count() == 0 })
}

fn all_functionals(l: &LldSeries) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let n = l.frames();
    let hop = l.hop_s;
    let all: Vec<bool> = alloc::vec![true; n];
    let unvoiced: Vec<bool> = l.voiced.iter().map(|v| !v).collect();
    let semitones: Vec<f64> = l
        .f0_hz
        .iter()
        .map(|&f| if f > 0.0 { 12.0 * crate::math::log(f / SEMITONE_REF_HZ) / core::f64::consts::LN_2 } else { 0.0 })
        .collect();

    for (name, voiced_only) in CONTOUR_DESCRIPTORS {
        let track: &[f64] = match name {
            "f0_semitone" => &semitones,
            "loudness_db" => &l.rms_db,
            "hnr_db" => &l.hnr_db,
            "alpha_ratio" => &l.alpha_ratio,
            "slope_0_500" => &l.spectral_slope_0_500,
            _ => &l.spectral_slope_500_1500,
        };
        let mask = if voiced_only { &l.voiced } else { &all };
        let stats = contour_stats(track, mask, hop);
        for (f, v) in CONTOUR_FUNCTIONALS.iter().zip(stats) {
            out.insert(alloc::format!("{name}_{f}"), v);
        }
    }

    for (k, track) in l.mfcc.iter().enumerate().take(4) {
        let vals: Vec<f64> = track.clone();
        out.insert(alloc::format!("mfcc{}_mean", k + 1), mean(&vals));
        out.insert(alloc::format!("mfcc{}_std", k + 1), pop_std(&vals));
        out.insert(alloc::format!("mfcc{}_voiced_mean", k + 1), masked_mean(track, &l.voiced));
    }

    let (jm, jc) = perturbation(&l.period_lengths_s, &l.period_segment);
    let (sm, sc) = perturbation(&l.period_peak_amps, &l.period_segment);
    out.insert("jitter_local_mean".into(), jm);
    out.insert("jitter_local_cov".into(), jc);
    out.insert("shimmer_local_mean".into(), sm);
    out.insert("shimmer_local_cov".into(), sc);

    out.insert("loudness_db_voiced_mean".into(), masked_mean(&l.rms_db, &l.voiced));
    out.insert("loudness_db_unvoiced_mean".into(), masked_mean(&l.rms_db, &unvoiced));
    out.insert("alpha_ratio_unvoiced_mean".into(), masked_mean(&l.alpha_ratio, &unvoiced));
    out.insert("slope_0_500_unvoiced_mean".into(), masked_mean(&l.spectral_slope_0_500, &unvoiced));
    out.insert("slope_500_1500_unvoiced_mean".into(), masked_mean(&l.spectral_slope_500_1500, &unvoiced));

    let duration = n as f64 * hop;
    let peaks = loudness_peaks(&l.rms_db);
    out.insert("loudness_peaks_per_sec".into(), if duration > 0.0 { peaks as f64 / duration } else { 0.0 });
    let voiced_runs = runs(&l.voiced, true, hop);
    let unvoiced_runs = runs(&l.voiced, false, hop);
    out.insert(
        "voiced_segments_per_sec".into(),
        if duration > 0.0 { voiced_runs.len() as f64 / duration } else { 0.0 },
    );
    out.insert("voiced_segment_len_mean".into(), mean(&voiced_runs));
    out.insert("voiced_segment_len_std".into(), pop_std(&voiced_runs));
    out.insert("unvoiced_segment_len_mean".into(), mean(&unvoiced_runs));
    out.insert("unvoiced_segment_len_std".into(), pop_std(&unvoiced_runs));

    let mean_power = mean(&l.rms_db.iter().map(|d| crate::math::pow(10.0, d / 10.0)).collect::<Vec<_>>());
    out.insert("equivalent_sound_level_db".into(), (10.0 * log10(mean_power.max(1e-300))).max(RMS_FLOOR_DB));
    out
}

/// The ten contour functionals over frames where `mask` holds; all zero if none do.
fn contour_stats(track: &[f64], mask: &[bool], hop: f64) -> [f64; 10] {
    let vals: Vec<f64> = track.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    if vals.is_empty() {
        return [0.0; 10];
    }
    let m = mean(&vals);
    let cov = pop_std(&vals) / abs(m).max(COV_FLOOR);
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    let p20 = percentile_sorted(&sorted, 0.2);
    let p50 = percentile_sorted(&sorted, 0.5);
    let p80 = percentile_sorted(&sorted, 0.8);

    let mut rising = Vec::new();
    let mut falling = Vec::new();
    for t in 1..track.len() {
        if mask[t] && mask[t - 1] {
            let d = (track[t] - track[t - 1]) / hop;
            if d > 0.0 {
                rising.push(d);
            } else if d < 0.0 {
                falling.push(-d);
            }
        }
    }
    [m, cov, p20, p50, p80, p80 - p20, mean(&rising), pop_std(&rising), mean(&falling), pop_std(&falling)]
}

/// Local perturbation (jitter/shimmer): mean absolute difference of
/// consecutive values within a segment divided by the mean value, and the
/// coefficient of variation of those normalized differences.
fn perturbation(values: &[f64], segment: &[usize]) -> (f64, f64) {
    let diffs: Vec<f64> = (1..values.len())
        .filter(|&i| segment[i] == segment[i - 1])
        .map(|i| abs(values[i] - values[i - 1]))
        .collect();
    let m = mean(values);
    if diffs.is_empty() || m <= 0.0 {
        return (0.0, 0.0);
    }
    let rel: Vec<f64> = diffs.iter().map(|d| d / m).collect();
    let jm = mean(&rel);
    (jm, pop_std(&rel) / jm.max(COV_FLOOR))
}

fn masked_mean(track: &[f64], mask: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&v, &m) in track.iter().zip(mask) {
        if m {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn pop_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

/// Strict local maxima of the loudness contour that rise at least 3 dB above
/// the preceding trough.
fn loudness_peaks(db: &[f64]) -> usize {
    let mut peaks = 0;
    let mut trough = f64::INFINITY;
    for t in 0..db.len() {
        trough = trough.min(db[t]);
        let left = if t > 0 { db[t - 1] } else { f64::NEG_INFINITY };
        let right = db.get(t + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if db[t] > left && db[t] >= right && db[t] - trough >= 3.0 {
            peaks += 1;
            trough = db[t];
        }
    }
    peaks
}

/// Durations (seconds) of maximal runs of frames whose flag equals `target`.
fn runs(flags: &[bool], target: bool, hop: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut len = 0usize;
    for &f in flags {
        if f == target {
            len += 1;
        } else if len > 0 {
            out.push(len as f64 * hop);
            len = 0;
        }
    }
    if len > 0 {
        out.push(len as f64 * hop);
    }
    out
}
