//! Canonical audio representation and the preprocessing chain:
//! resample to 16 kHz, peak-normalize, then stationary spectral gating.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, Complex};
use crate::math::{abs, ceil, floor, round, log10, sqrt};

pub const CANONICAL_RATE: u32 = 16_000;
pub const PEAK_TARGET: f64 = 0.95;
/// Zero crossings of the resampling kernel at the lower of the two rates.
pub const RESAMPLE_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.0;
const KAISER_TABLE: usize = 4096;
/// Half-width in bins of the median used to cap per-bin noise floors.
const FLOOR_NEIGHBOURHOOD: usize = 8;

/// Expected clip duration range in seconds; clips outside it are accepted with a warning.
pub const EXPECTED_DURATION: (f64, f64) = (5.0, 12.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AudioError {
    #[error("clip `{0}` has no samples")]
    EmptyClip(String),
    #[error("clip `{id}` has {len} samples, needs more than {needed}")]
    ClipTooShort { id: String, len: usize, needed: usize },
    #[error("invalid denoise config: {0}")]
    InvalidConfig(&'static str),
    #[error("sample rate must be positive")]
    ZeroSampleRate,
}

/// Mono PCM clip with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { id: id.into(), samples, sample_rate }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &s| f64::max(m, abs(s)))
    }

    pub fn is_canonical(&self) -> bool {
        self.sample_rate == CANONICAL_RATE
    }

    /// Averages interleaved frames of `channels` channels into a mono clip.
    pub fn from_interleaved(id: impl Into<String>, interleaved: &[f64], channels: usize, sample_rate: u32) -> Self {
        let channels = channels.max(1);
        let samples = interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect();
        Self::new(id, samples, sample_rate)
    }
}

/// Stationary spectral-gating parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    /// Per-band percentile of frame magnitudes taken as the noise floor.
    pub noise_floor_percentile: f64,
    /// Bins must exceed the floor by this many dB to pass the gate.
    pub gate_threshold_db: f64,
    pub fft_size: usize,
    /// Half-width (in bins) of the box filter smoothing the gate mask.
    pub smoothing_bands: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { noise_floor_percentile: 0.1, gate_threshold_db: 6.0, fft_size: 1024, smoothing_bands: 2 }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<(), AudioError> {
        if !(self.noise_floor_percentile >= 0.0 && self.noise_floor_percentile < 1.0) {
            return Err(AudioError::InvalidConfig("noise_floor_percentile must lie in [0, 1)"));
        }
        if !(self.gate_threshold_db >= 0.0) {
            return Err(AudioError::InvalidConfig("gate_threshold_db must be >= 0"));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < 16 {
            return Err(AudioError::InvalidConfig("fft_size must be a power of two >= 16"));
        }
        Ok(())
    }
}

/// Resamples to `target_rate` and peak-normalizes to [`PEAK_TARGET`].
///
/// Resampling is skipped when the rates already match, and an all-zero clip
/// is returned unscaled, so the operation is idempotent on canonical clips.
pub fn preprocess(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if clip.samples.is_empty() {
        return Err(AudioError::EmptyClip(clip.id.clone()));
    }
    if clip.sample_rate == 0 || target_rate == 0 {
        return Err(AudioError::ZeroSampleRate);
    }
    let mut samples = if clip.sample_rate == target_rate {
        clip.samples.clone()
    } else {
        resample(&clip.samples, clip.sample_rate, target_rate)
    };
    let peak = samples.iter().fold(0.0, |m, &s| f64::max(m, abs(s)));
    if peak > 0.0 && abs(peak - PEAK_TARGET) > 1e-12 {
        let gain = PEAK_TARGET / peak;
        for s in samples.iter_mut() {
            *s *= gain;
        }
    }
    let out = AudioClip::new(clip.id.clone(), samples, target_rate);
    let d = out.duration();
    if d < EXPECTED_DURATION.0 || d > EXPECTED_DURATION.1 {
        log::warn!("clip `{}` lasts {:.2} s, outside the expected 5-12 s range", out.id, d);
    }
    Ok(out)
}

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let cutoff = ratio.min(1.0);
    // Half-width in input samples covering RESAMPLE_TAPS / 2 zero crossings.
    let half_width = (RESAMPLE_TAPS / 2) as f64 / cutoff;
    let table: Vec<f64> = (0..=KAISER_TABLE)
        .map(|i| dsp::kaiser(i as f64 / KAISER_TABLE as f64, KAISER_BETA))
        .collect();
    let window = |t: f64| -> f64 {
        let pos = abs(t) * KAISER_TABLE as f64;
        let i = floor(pos) as usize;
        if i >= KAISER_TABLE {
            return 0.0;
        }
        let frac = pos - i as f64;
        table[i] * (1.0 - frac) + table[i + 1] * frac
    };
    let out_len = round(samples.len() as f64 * ratio) as usize;
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let centre = j as f64 / ratio;
        let lo = ceil(centre - half_width).max(0.0) as usize;
        let hi = (floor(centre + half_width) as usize).min(samples.len() - 1);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for (k, &s) in samples.iter().enumerate().take(hi + 1).skip(lo) {
            let dx = centre - k as f64;
            let w = cutoff * dsp::sinc(cutoff * dx) * window(dx / half_width);
            acc += s * w;
            norm += w;
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    out
}

/// Stationary spectral gating: per frequency bin, the noise floor is the
/// configured percentile of that bin's magnitude across all frames (capped
/// by the median floor of neighbouring bins); bins below floor + threshold
/// are attenuated by a smoothed binary mask.
///
/// The mask never exceeds 1, so no band gains energy.
pub fn denoise(clip: &AudioClip, cfg: &DenoiseConfig) -> Result<AudioClip, AudioError> {
    cfg.validate()?;
    let n = cfg.fft_size;
    if clip.samples.len() <= n {
        return Err(AudioError::ClipTooShort { id: clip.id.clone(), len: clip.samples.len(), needed: n });
    }
    let hop = n / 4;
    let pad = n / 2;
    let mut padded = vec![0.0; clip.samples.len() + 2 * pad];
    padded[pad..pad + clip.samples.len()].copy_from_slice(&clip.samples);

    let window = dsp::hann(n);
    let mut frames = dsp::stft(&padded, &window, hop);
    let bins = n / 2 + 1;

    let db = |c: &Complex| 20.0 * log10(c.norm() + 1e-12);
    let mut floor_db = vec![0.0; bins];
    let mut column = Vec::with_capacity(frames.len());
    for (b, fl) in floor_db.iter_mut().enumerate() {
        column.clear();
        column.extend(frames.iter().map(|f| db(&f[b])));
        column.sort_by(f64::total_cmp);
        *fl = crate::math::percentile_sorted(&column, cfg.noise_floor_percentile);
    }
    // A steady tone raises its own bin's percentile; cap each bin by the
    // median of its neighbourhood so narrow peaks are not mistaken for noise.
    let own = floor_db.clone();
    let mut neighbourhood = Vec::with_capacity(2 * FLOOR_NEIGHBOURHOOD + 1);
    for (b, fl) in floor_db.iter_mut().enumerate() {
        neighbourhood.clear();
        let lo = b.saturating_sub(FLOOR_NEIGHBOURHOOD);
        let hi = (b + FLOOR_NEIGHBOURHOOD).min(bins - 1);
        neighbourhood.extend_from_slice(&own[lo..=hi]);
        neighbourhood.sort_by(f64::total_cmp);
        *fl = fl.min(neighbourhood[neighbourhood.len() / 2]);
    }

    let s = cfg.smoothing_bands;
    let mut raw = vec![0.0; bins];
    for frame in frames.iter_mut() {
        for (b, r) in raw.iter_mut().enumerate() {
            *r = if db(&frame[b]) >= floor_db[b] + cfg.gate_threshold_db { 1.0 } else { 0.0 };
        }
        for b in 0..bins {
            let lo = b.saturating_sub(s);
            let hi = (b + s).min(bins - 1);
            let m = raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            frame[b] = frame[b].scale(m);
        }
    }

    let out = dsp::istft(&frames, &window, hop, padded.len());
    let samples = out[pad..pad + clip.samples.len()].iter().map(|x| x.clamp(-1.0, 1.0)).collect();
    Ok(AudioClip::new(clip.id.clone(), samples, clip.sample_rate))
}

/// Root-mean-square level of a clip.
pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    sqrt(samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{sin, PI};
    use crate::rng::SeededRng;

    fn tone(freq: f64, rate: u32, secs: f64, amp: f64) -> Vec<f64> {
        let n = (rate as f64 * secs) as usize;
        (0..n).map(|i| amp * sin(2.0 * PI * freq * i as f64 / rate as f64)).collect()
    }

    fn band_energy(samples: &[f64], lo_hz: f64, hi_hz: f64, rate: f64) -> (f64, f64) {
        // Energy inside vs outside [lo, hi] from one long FFT.
        let n = samples.len().next_power_of_two();
        let spec = dsp::rfft(samples, n);
        let mut inside = 0.0;
        let mut outside = 0.0;
        for (k, c) in spec.iter().enumerate() {
            let f = k as f64 * rate / n as f64;
            if f >= lo_hz && f <= hi_hz {
                inside += c.norm_sqr();
            } else {
                outside += c.norm_sqr();
            }
        }
        (inside, outside)
    }

    #[test]
    fn identity_when_rate_matches_and_peak_set() {
        let mut s = tone(300.0, 16_000, 0.5, 1.0);
        let peak = s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for x in s.iter_mut() {
            *x *= PEAK_TARGET / peak;
        }
        let s_peak = s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        // Force an exact peak so the bypass applies.
        let idx = s.iter().position(|x| x.abs() == s_peak).unwrap();
        s[idx] = PEAK_TARGET.copysign(s[idx]);
        let clip = AudioClip::new("a", s.clone(), 16_000);
        let out = preprocess(&clip, 16_000).unwrap();
        assert_eq!(out.samples, s);
    }

    #[test]
    fn normalizes_peak() {
        let clip = AudioClip::new("a", tone(200.0, 16_000, 0.3, 0.1), 16_000);
        let out = preprocess(&clip, 16_000).unwrap();
        assert!((out.peak() - 0.95).abs() < 1e-6);
    }

    #[test]
    fn preprocess_is_idempotent() {
        let clip = AudioClip::new("a", tone(523.0, 22_050, 0.4, 0.3), 22_050);
        let once = preprocess(&clip, 16_000).unwrap();
        let twice = preprocess(&once, 16_000).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn silence_stays_silent() {
        let clip = AudioClip::new("z", vec![0.0; 16_000], 16_000);
        let out = preprocess(&clip, 16_000).unwrap();
        assert!(out.samples.iter().all(|&x| x == 0.0));
        let d = denoise(&out, &DenoiseConfig::default()).unwrap();
        assert!(d.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_clip_rejected() {
        let clip = AudioClip::new("e", vec![], 16_000);
        assert_eq!(preprocess(&clip, 16_000), Err(AudioError::EmptyClip("e".into())));
    }

    #[test]
    fn resampled_tone_keeps_frequency() {
        let clip = AudioClip::new("t", tone(440.0, 44_100, 1.0, 0.5), 44_100);
        let out = preprocess(&clip, 16_000).unwrap();
        assert_eq!(out.sample_rate, 16_000);
        assert_eq!(out.samples.len(), 16_000);
        let n_fft = 16_384;
        let bin = dsp::dominant_bin(&out.samples, n_fft);
        let expected = 440.0 * n_fft as f64 / 16_000.0;
        assert!((bin as f64 - expected).abs() <= 1.0, "bin {bin} vs {expected}");
    }

    #[test]
    fn denoise_improves_tone_snr() {
        let mut rng = SeededRng::new(4);
        let clean = tone(220.0, 16_000, 2.0, 0.5);
        let noisy: Vec<f64> = clean.iter().map(|s| s + 0.05 * rng.normal()).collect();
        let clip = AudioClip::new("n", noisy, 16_000);
        let out = denoise(&clip, &DenoiseConfig::default()).unwrap();
        assert_eq!(out.samples.len(), clip.samples.len());
        let (ti, to) = band_energy(&clip.samples, 200.0, 240.0, 16_000.0);
        let (oi, oo) = band_energy(&out.samples, 200.0, 240.0, 16_000.0);
        assert!(oi / oo > ti / to, "snr before {} after {}", ti / to, oi / oo);
        assert!(out.samples.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn degenerate_gate_passes_signal() {
        let mut rng = SeededRng::new(5);
        let s: Vec<f64> = (0..8000).map(|i| 0.3 * sin(i as f64 * 0.07) + 0.05 * rng.normal()).collect();
        let clip = AudioClip::new("d", s, 16_000);
        let cfg = DenoiseConfig { noise_floor_percentile: 0.0, gate_threshold_db: 0.0, ..Default::default() };
        let out = denoise(&clip, &cfg).unwrap();
        let max_diff = clip.samples.iter().zip(&out.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_diff < 1e-3, "{max_diff}");
    }

    #[test]
    fn short_clip_rejected() {
        let clip = AudioClip::new("s", vec![0.1; 512], 16_000);
        assert!(matches!(denoise(&clip, &DenoiseConfig::default()), Err(AudioError::ClipTooShort { .. })));
    }

    #[test]
    fn stereo_average() {
        let inter: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let clip = AudioClip::from_interleaved("s", &inter, 2, 16_000);
        assert_eq!(clip.samples.len(), 100);
        assert!(clip.samples.iter().all(|&x| x == 0.0));
    }
}
