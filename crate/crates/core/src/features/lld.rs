//! Frame-level low-level descriptors.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::audio::{AudioClip, CANONICAL_RATE};
use crate::dsp;
use crate::math::{abs, ceil, floor, ln, log10, round, sqrt};

/// NCCF peak height a frame needs to count as voiced.
pub const VOICING_CLARITY: f64 = 0.45;
/// Frames quieter than this RMS are never voiced.
const VOICING_RMS_FLOOR: f64 = 1e-4;
/// Floor for dB conversions of RMS.
pub const RMS_FLOOR_DB: f64 = -100.0;
const SPECTRAL_FFT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    pub mel_bands: usize,
    pub mfcc_count: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { frame_len_ms: 25.0, hop_ms: 10.0, f0_min: 55.0, f0_max: 1000.0, mel_bands: 26, mfcc_count: 4 }
    }
}

impl FrameConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<(), FeatureError> {
        if !(self.frame_len_ms > self.hop_ms && self.hop_ms > 0.0) {
            return Err(FeatureError::InvalidFrameConfig("need frame_len_ms > hop_ms > 0"));
        }
        if !(self.f0_min > 0.0 && self.f0_min < self.f0_max && self.f0_max < sample_rate as f64 / 2.0) {
            return Err(FeatureError::InvalidFrameConfig("need 0 < f0_min < f0_max < sample_rate / 2"));
        }
        if self.mfcc_count == 0 || self.mfcc_count >= self.mel_bands {
            return Err(FeatureError::InvalidFrameConfig("need 0 < mfcc_count < mel_bands"));
        }
        Ok(())
    }

    pub fn frame_samples(&self, rate: u32) -> usize {
        round(self.frame_len_ms * rate as f64 / 1000.0) as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        round(self.hop_ms * rate as f64 / 1000.0) as usize
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_ms / 1000.0
    }
}

/// Per-frame descriptor tracks plus per-period tracks from voiced regions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LldSeries {
    pub hop_s: f64,
    /// Zero where unvoiced.
    pub f0_hz: Vec<f64>,
    pub voiced: Vec<bool>,
    pub rms_db: Vec<f64>,
    /// Only meaningful where voiced; zero elsewhere.
    pub hnr_db: Vec<f64>,
    pub spectral_slope_0_500: Vec<f64>,
    pub spectral_slope_500_1500: Vec<f64>,
    pub alpha_ratio: Vec<f64>,
    /// `mfcc[k][t]` is coefficient `k + 1` at frame `t`.
    pub mfcc: Vec<Vec<f64>>,
    pub period_lengths_s: Vec<f64>,
    pub period_peak_amps: Vec<f64>,
    /// Index of the voiced segment each period belongs to; jitter and
    /// shimmer only difference periods inside the same segment.
    pub period_segment: Vec<usize>,
}

impl LldSeries {
    pub fn frames(&self) -> usize {
        self.rms_db.len()
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }
}

/// Computes all low-level descriptors of a canonical clip.
pub fn compute_llds(clip: &AudioClip, cfg: &FrameConfig) -> Result<LldSeries, FeatureError> {
    if clip.sample_rate != CANONICAL_RATE {
        return Err(FeatureError::NonCanonicalRate(clip.sample_rate));
    }
    cfg.validate(clip.sample_rate)?;
    let rate = clip.sample_rate;
    let frame = cfg.frame_samples(rate);
    let hop = cfg.hop_samples(rate);
    let x = &clip.samples;
    if x.len() < frame + 2 * hop {
        return Err(FeatureError::ClipTooShort { len: x.len(), needed: frame + 2 * hop });
    }
    let n_frames = 1 + (x.len() - frame) / hop;

    let fs = rate as f64;
    let min_lag = floor(fs / cfg.f0_max).max(2.0) as usize;
    let max_lag = ceil(fs / cfg.f0_min) as usize;
    let hamming = dsp::hamming(frame);
    let bin_hz = fs / SPECTRAL_FFT as f64;
    let mel = dsp::mel_filterbank(cfg.mel_bands, SPECTRAL_FFT, fs, 20.0, fs / 2.0);

    let mut out = LldSeries {
        hop_s: cfg.hop_seconds(),
        mfcc: vec![Vec::with_capacity(n_frames); cfg.mfcc_count],
        ..Default::default()
    };
    let mut windowed = vec![0.0; frame];
    let mut log_mel = vec![0.0; cfg.mel_bands];
    for t in 0..n_frames {
        let start = t * hop;
        let seg = &x[start..start + frame];

        let rms = sqrt(seg.iter().map(|s| s * s).sum::<f64>() / frame as f64);
        out.rms_db.push(to_db(rms));

        let (lag, clarity) = if rms >= VOICING_RMS_FLOOR {
            pitch_candidate(x, start, frame, min_lag, max_lag)
        } else {
            (0.0, 0.0)
        };
        let voiced = clarity >= VOICING_CLARITY && lag > 0.0;
        let f0 = if voiced { fs / lag } else { 0.0 };
        let voiced = voiced && f0 >= cfg.f0_min && f0 <= cfg.f0_max;
        out.voiced.push(voiced);
        out.f0_hz.push(if voiced { f0 } else { 0.0 });
        out.hnr_db.push(if voiced { hnr_from_clarity(clarity) } else { 0.0 });

        for ((w, &s), &h) in windowed.iter_mut().zip(seg).zip(&hamming) {
            *w = s * h;
        }
        let power: Vec<f64> = dsp::rfft(&windowed, SPECTRAL_FFT).iter().map(|c| c.norm_sqr()).collect();
        out.spectral_slope_0_500.push(band_slope(&power, bin_hz, 0.0, 500.0));
        out.spectral_slope_500_1500.push(band_slope(&power, bin_hz, 500.0, 1500.0));
        let low = band_power(&power, bin_hz, 50.0, 1000.0);
        let high = band_power(&power, bin_hz, 1000.0, 5000.0);
        out.alpha_ratio.push(10.0 * log10((low + 1e-12) / (high + 1e-12)));

        for (lm, filt) in log_mel.iter_mut().zip(&mel) {
            let e: f64 = filt.iter().zip(&power).map(|(f, p)| f * p).sum();
            *lm = ln(e + 1e-10);
        }
        for (k, track) in out.mfcc.iter_mut().enumerate() {
            track.push(dsp::dct2_coefficient(&log_mel, k + 1));
        }
    }

    track_periods(x, fs, hop, frame, &mut out);
    Ok(out)
}

fn to_db(rms: f64) -> f64 {
    (20.0 * log10(rms.max(1e-300))).max(RMS_FLOOR_DB)
}

fn hnr_from_clarity(r: f64) -> f64 {
    let r = r.clamp(1e-6, 1.0 - 1e-6);
    10.0 * log10(r / (1.0 - r))
}

/// Normalized cross-correlation pitch search over `min_lag..=max_lag`.
///
/// The analysis window is the frame widened by `max_lag` samples, centred on
/// the frame and shifted to stay inside the signal. Returns the refined lag
/// in samples and its correlation (clarity).
fn pitch_candidate(x: &[f64], start: usize, len: usize, min_lag: usize, max_lag: usize) -> (f64, f64) {
    let want = len + max_lag;
    let width = want.min(x.len());
    let centre = start + len / 2;
    let lo = centre.saturating_sub(want / 2).min(x.len() - width);
    let w = &x[lo..lo + width];
    let max_lag = max_lag.min(width.saturating_sub(len / 2));
    if max_lag <= min_lag + 1 {
        return (0.0, 0.0);
    }
    let mut prefix = vec![0.0; width + 1];
    for (i, s) in w.iter().enumerate() {
        prefix[i + 1] = prefix[i] + s * s;
    }
    let mut nccf = vec![0.0; max_lag + 2];
    for lag in min_lag - 1..=(max_lag + 1).min(width - 1) {
        let n = width - lag;
        let cross: f64 = w[..n].iter().zip(&w[lag..]).map(|(a, b)| a * b).sum();
        let denom = sqrt(prefix[n] * (prefix[width] - prefix[lag]));
        nccf[lag] = if denom > 0.0 { cross / denom } else { 0.0 };
    }
    let best = (min_lag..=max_lag).map(|l| nccf[l]).fold(f64::NEG_INFINITY, f64::max);
    if best <= 0.0 {
        return (0.0, 0.0);
    }
    // Prefer the shortest-lag local peak close to the global best (octave guard).
    let pick = (min_lag..=max_lag)
        .find(|&l| nccf[l] >= 0.9 * best && nccf[l] >= nccf[l - 1] && nccf[l] >= nccf[l + 1])
        .unwrap_or(min_lag);
    let (a, b, c) = (nccf[pick - 1], nccf[pick], nccf[pick + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if abs(denom) > 1e-12 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    (pick as f64 + shift, b)
}

fn band_power(power: &[f64], bin_hz: f64, lo: f64, hi: f64) -> f64 {
    power
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * bin_hz;
            f >= lo && f < hi
        })
        .map(|(_, p)| p)
        .sum()
}

/// Least-squares slope of the dB spectrum against frequency (dB per Hz).
fn band_slope(power: &[f64], bin_hz: f64, lo: f64, hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = power
        .iter()
        .enumerate()
        .map(|(k, &p)| (k as f64 * bin_hz, p))
        .filter(|(f, _)| *f >= lo && *f <= hi)
        .map(|(f, p)| (f, 10.0 * log10(p + 1e-12)))
        .collect();
    let n = pts.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Cycle-by-cycle pitch marks inside voiced runs: successive waveform
/// maxima searched within ±20% of the local period, refined parabolically.
fn track_periods(x: &[f64], fs: f64, hop: usize, frame: usize, out: &mut LldSeries) {
    let n_frames = out.frames();
    let mut t = 0;
    let mut segment = 0;
    while t < n_frames {
        if !out.voiced[t] {
            t += 1;
            continue;
        }
        let first = t;
        while t < n_frames && out.voiced[t] {
            t += 1;
        }
        let last = t - 1;
        let lo = first * hop;
        let hi = (last * hop + frame).min(x.len());
        let local_period = |pos: usize| -> f64 {
            let f = (pos.saturating_sub(frame / 2) / hop).clamp(first, last);
            fs / out.f0_hz[f]
        };

        let p0 = local_period(lo);
        let search_end = (lo + ceil(p0) as usize).min(hi);
        let Some(mut mark) = argmax_range(x, lo, search_end) else { continue };
        let mut marks: Vec<(f64, f64)> = vec![refine_peak(x, mark)];
        loop {
            let p = local_period(mark);
            let a = mark + floor(0.8 * p) as usize;
            let b = (mark + ceil(1.2 * p) as usize).min(hi.saturating_sub(1));
            if a >= b {
                break;
            }
            let Some(next) = argmax_range(x, a, b + 1) else { break };
            // A maximum on the window edge is not a genuine cycle peak.
            if next == a || next == b {
                break;
            }
            mark = next;
            marks.push(refine_peak(x, mark));
        }
        for w in marks.windows(2) {
            let period = (w[1].0 - w[0].0) / fs;
            out.period_lengths_s.push(period);
            out.period_peak_amps.push(w[1].1);
            out.period_segment.push(segment);
        }
        segment += 1;
    }
}

fn argmax_range(x: &[f64], lo: usize, hi: usize) -> Option<usize> {
    if lo >= hi || hi > x.len() {
        return None;
    }
    let mut best = lo;
    for i in lo..hi {
        if x[i] > x[best] {
            best = i;
        }
    }
    Some(best)
}

/// Parabolic vertex through three samples around `i`: (position, value).
fn refine_peak(x: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= x.len() {
        return (i as f64, x[i]);
    }
    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
    let denom = a - 2.0 * b + c;
    if abs(denom) < 1e-15 {
        return (i as f64, b);
    }
    let shift = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
    (i as f64 + shift, b - 0.25 * (a - c) * shift)
}
