//! Signal-processing primitives: radix-2 FFT, windows, STFT and mel filters.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use crate::math::{cos, log10, pow, sin, sqrt, PI};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn norm(self) -> f64 {
        sqrt(self.norm_sqr())
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

/// In-place iterative radix-2 FFT. `buf.len()` must be a power of two.
/// `inverse` applies the conjugate transform and the 1/n scale.
pub fn fft_in_place(buf: &mut [Complex], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    if n <= 1 {
        return;
    }
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex::new(cos(ang * k as f64), sin(ang * k as f64));
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    if inverse {
        let inv = 1.0 / n as f64;
        for c in buf.iter_mut() {
            *c = c.scale(inv);
        }
    }
}

/// FFT of a real signal zero-padded to `n`; returns the `n / 2 + 1` non-negative bins.
pub fn rfft(signal: &[f64], n: usize) -> Vec<Complex> {
    let mut buf = vec![Complex::ZERO; n];
    for (b, &s) in buf.iter_mut().zip(signal) {
        b.re = s;
    }
    fft_in_place(&mut buf, false);
    buf.truncate(n / 2 + 1);
    buf
}

/// Inverse of [`rfft`] from the half spectrum, returning `n` real samples.
pub fn irfft(half: &[Complex], n: usize) -> Vec<f64> {
    let mut buf = vec![Complex::ZERO; n];
    buf[..half.len()].copy_from_slice(half);
    for k in 1..n / 2 {
        buf[n - k] = half[k].conj();
    }
    fft_in_place(&mut buf, true);
    buf.into_iter().map(|c| c.re).collect()
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * cos(2.0 * PI * i as f64 / n as f64)).collect()
}

/// Hamming window (symmetric).
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.54 - 0.46 * cos(2.0 * PI * i as f64 / (n - 1) as f64)).collect()
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser window value at normalized position `t` in [-1, 1].
pub fn kaiser(t: f64, beta: f64) -> f64 {
    if !(-1.0..=1.0).contains(&t) {
        return 0.0;
    }
    bessel_i0(beta * sqrt(1.0 - t * t)) / bessel_i0(beta)
}

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        sin(PI * x) / (PI * x)
    }
}

/// Short-time spectrum frames of `signal` with the given window and hop.
/// The signal is framed from sample 0; the final partial frame is zero-padded.
pub fn stft(signal: &[f64], window: &[f64], hop: usize) -> Vec<Vec<Complex>> {
    let n = window.len();
    let frames = frame_count(signal.len(), n, hop);
    let mut out = Vec::with_capacity(frames);
    let mut seg = vec![0.0; n];
    for f in 0..frames {
        let start = f * hop;
        for (i, s) in seg.iter_mut().enumerate() {
            *s = signal.get(start + i).copied().unwrap_or(0.0) * window[i];
        }
        out.push(rfft(&seg, n));
    }
    out
}

/// Weighted overlap-add inverse of [`stft`], normalized by the summed squared window.
pub fn istft(frames: &[Vec<Complex>], window: &[f64], hop: usize, len: usize) -> Vec<f64> {
    let n = window.len();
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    for (f, spec) in frames.iter().enumerate() {
        let seg = irfft(spec, n);
        let start = f * hop;
        for i in 0..n {
            let t = start + i;
            if t >= len {
                break;
            }
            out[t] += seg[i] * window[i];
            norm[t] += window[i] * window[i];
        }
    }
    for (o, w) in out.iter_mut().zip(norm) {
        if w > 1e-12 {
            *o /= w;
        }
    }
    out
}

/// Number of frames needed to cover `len` samples.
pub fn frame_count(len: usize, frame: usize, hop: usize) -> usize {
    if len <= frame {
        1
    } else {
        1 + (len - frame).div_ceil(hop)
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (pow(10.0, mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank over `n_fft / 2 + 1` bins, spanning `lo`..`hi` Hz.
pub fn mel_filterbank(bands: usize, n_fft: usize, sample_rate: f64, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let bins = n_fft / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(lo), hz_to_mel(hi));
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate / n_fft as f64;
    (0..bands)
        .map(|b| {
            let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II coefficient `k` of `xs`.
pub fn dct2_coefficient(xs: &[f64], k: usize) -> f64 {
    let n = xs.len() as f64;
    let sum: f64 = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| x * cos(PI * k as f64 * (i as f64 + 0.5) / n))
        .sum();
    let scale = if k == 0 { sqrt(1.0 / n) } else { sqrt(2.0 / n) };
    scale * sum
}

/// Index of the largest-magnitude bin of the real spectrum of `signal`.
pub fn dominant_bin(signal: &[f64], n_fft: usize) -> usize {
    let spec = rfft(signal, n_fft);
    let mags: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
    crate::math::argmax(&mags)
}
