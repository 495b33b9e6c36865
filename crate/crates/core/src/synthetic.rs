//! Seeded synthetic signals and datasets with known ground truth, used by
//! the test suites, the acceptance harness and the CLI demo fixture.

use alloc::vec::Vec;

use crate::math::{cos, round, sin, sqrt, PI};
use crate::rng::SeededRng;

/// Pure sine at `freq` Hz.
pub fn sine(freq: f64, rate: u32, secs: f64, amp: f64) -> Vec<f64> {
    let n = round(rate as f64 * secs) as usize;
    (0..n).map(|i| amp * sin(2.0 * PI * freq * i as f64 / rate as f64)).collect()
}

/// Periodic tone built cycle by cycle, each cycle running peak to peak.
///
/// Cycle lengths are `T0 * (1 + e_i)` with `e_i` i.i.d. normal, scaled so
/// the expected local jitter `E|T_i - T_{i-1}| / T0` equals `jitter`
/// (for normal `e`, `E|e_i - e_{i-1}| = 2 sigma / sqrt(pi)`).
pub fn jittered_tone(f0: f64, rate: u32, secs: f64, amp: f64, jitter: f64, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    let sigma = jitter * sqrt(PI) / 2.0;
    let n = round(rate as f64 * secs) as usize;
    let t0 = rate as f64 / f0;
    let mut out = Vec::with_capacity(n);
    let mut cycle_start = 0.0;
    let mut period = t0 * (1.0 + sigma * rng.normal());
    for i in 0..n {
        let mut t = i as f64;
        while t >= cycle_start + period {
            cycle_start += period;
            period = t0 * (1.0 + sigma * rng.normal());
        }
        t -= cycle_start;
        out.push(amp * cos(2.0 * PI * t / period));
    }
    out
}

pub fn white_noise(n: usize, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    (0..n).map(|_| std * rng.normal()).collect()
}

/// Simulated annotation panel with known per-rater accuracies.
pub struct RaterPanel {
    pub matrix: crate::annotation::RaterMatrix,
    pub truth: Vec<crate::label::ConfidenceLabel>,
    pub accuracies: Vec<f64>,
}

/// Draws true labels from `class_probs`, then lets each rater label every
/// clip. Within each true class a rater is right on exactly
/// `round(accuracy * n_class)` clips (chosen at random) and otherwise picks
/// one of the two wrong classes uniformly, so each rater's realized
/// confusion diagonal equals its generating accuracy up to rounding.
pub fn rater_panel(n_clips: usize, accuracies: &[f64], class_probs: [f64; 3], seed: u64) -> RaterPanel {
    use crate::annotation::{RaterMatrix, RatingValue};
    use crate::label::ConfidenceLabel;
    use alloc::format;

    let mut rng = SeededRng::new(seed);
    let truth: Vec<ConfidenceLabel> = (0..n_clips)
        .map(|_| ConfidenceLabel::from_index(rng.categorical(&class_probs)).expect("3 classes"))
        .collect();
    let mut cells = alloc::vec![alloc::vec![None; accuracies.len()]; n_clips];
    for (j, &acc) in accuracies.iter().enumerate() {
        for class in ConfidenceLabel::ALL {
            let mut members: Vec<usize> = (0..n_clips).filter(|&i| truth[i] == class).collect();
            rng.shuffle(&mut members);
            let correct = round(acc * members.len() as f64) as usize;
            for (rank, &i) in members.iter().enumerate() {
                let given = if rank < correct {
                    class
                } else {
                    let others: Vec<ConfidenceLabel> = ConfidenceLabel::ALL.into_iter().filter(|&c| c != class).collect();
                    others[rng.index(2)]
                };
                cells[i][j] = Some(RatingValue::Rated(given));
            }
        }
    }
    RaterPanel {
        matrix: RaterMatrix::from_labels(
            (0..n_clips).map(|i| format!("clip{i:04}")).collect(),
            (0..accuracies.len()).map(|j| format!("rater{j}")).collect(),
            cells,
        ),
        truth,
        accuracies: accuracies.to_vec(),
    }
}

/// Isotropic Gaussian blobs, `n_per_class` points around each centre.
/// Rows are interleaved by class.
pub fn blobs(n_per_class: usize, centres: &[Vec<f64>], std: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = SeededRng::new(seed);
    let mut xs = Vec::with_capacity(n_per_class * centres.len());
    let mut ys = Vec::with_capacity(n_per_class * centres.len());
    for _ in 0..n_per_class {
        for (c, centre) in centres.iter().enumerate() {
            xs.push(centre.iter().map(|&m| m + std * rng.normal()).collect());
            ys.push(c);
        }
    }
    (xs, ys)
}

/// Parameters for [`corpus`]. Class `c` has ordinal score `c - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_per_class: [usize; 3],
    pub id_prefix: &'static str,
    pub emb_dim: usize,
    /// Distance of embedding class means from the origin, in noise std units.
    pub emb_signal: f64,
    /// Embedding means lie on one line (score times a shared direction)
    /// instead of three random directions.
    pub ordinal_embeddings: bool,
    /// Fraction of samples whose embedding is pure noise.
    pub corrupt_fraction: f64,
    /// Prosodic dimensions shifted by `feature_signal * score`.
    pub informative_dims: Vec<usize>,
    pub feature_signal: f64,
    /// For pool generation: fraction of samples whose features are moved
    /// `noisy_shift` of the way toward a neighbouring class.
    pub noisy_fraction: f64,
    pub noisy_shift: f64,
    /// Scale applied to the whole latent feature vector of noisy samples,
    /// signal and noise alike. Values well below 1 give low-evidence clips
    /// near the neutral point.
    pub noisy_spread: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_per_class: [100, 100, 100],
            id_prefix: "clip",
            emb_dim: 16,
            emb_signal: 3.0,
            ordinal_embeddings: false,
            corrupt_fraction: 0.0,
            informative_dims: alloc::vec![0, 1, 2, 3],
            feature_signal: 3.0,
            noisy_fraction: 0.0,
            noisy_shift: 0.0,
            noisy_spread: 1.0,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    /// 100 per class, eight informative dimensions with class means six
    /// noise standard deviations apart.
    pub fn separable(seed: u64) -> Self {
        Self { informative_dims: (0..8).collect(), feature_signal: 6.0, seed, ..Self::default() }
    }
}

/// Labelled features and embeddings with known structure.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Raw, unnormalized vectors.
    pub features: Vec<crate::features::FeatureVector>,
    pub embeddings: Vec<Vec<f64>>,
    pub labels: Vec<crate::label::ConfidenceLabel>,
    /// Embedding carries no label information.
    pub corrupted: Vec<bool>,
    /// Features were shifted toward a neighbouring class.
    pub noisy: Vec<bool>,
}

impl SyntheticCorpus {
    pub fn ids(&self) -> Vec<alloc::string::String> {
        self.features.iter().map(|f| f.id.clone()).collect()
    }
}

fn unit_vector(dim: usize, rng: &mut SeededRng) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let norm = sqrt(v.iter().map(|x| x * x).sum::<f64>());
    v.into_iter().map(|x| x / norm).collect()
}

/// Generates a corpus. Prosodic noise is N(0, 1); the five disfluency
/// probabilities and the stress probability are logistic of noise plus
/// half the class score. Embedding class means are the same for every
/// seed, so a ground-truth corpus and a pool drawn with different seeds
/// share one geometry.
pub fn corpus(spec: &CorpusSpec) -> SyntheticCorpus {
    use crate::features::{FeatureVector, FEATURE_DIM, PROSODIC_DIM};
    use crate::label::ConfidenceLabel;
    use crate::math::exp;
    use alloc::format;

    let mut geometry = SeededRng::new(0x5EED);
    let axis = unit_vector(spec.emb_dim, &mut geometry);
    let directions: Vec<Vec<f64>> = (0..3).map(|_| unit_vector(spec.emb_dim, &mut geometry)).collect();

    let mut rng = SeededRng::new(spec.seed);
    let mut out = SyntheticCorpus { features: Vec::new(), embeddings: Vec::new(), labels: Vec::new(), corrupted: Vec::new(), noisy: Vec::new() };
    let mut order: Vec<usize> = Vec::new();
    for (c, &n) in spec.n_per_class.iter().enumerate() {
        order.extend(core::iter::repeat_n(c, n));
    }
    rng.shuffle(&mut order);
    for (i, &c) in order.iter().enumerate() {
        let score = c as f64 - 1.0;
        let corrupted = rng.bernoulli(spec.corrupt_fraction);
        let noisy = rng.bernoulli(spec.noisy_fraction);
        let toward = if c == 2 { -1.0 } else { 1.0 };
        let feat_score = if noisy { score + spec.noisy_shift * toward } else { score };

        let mut values = alloc::vec![0.0; FEATURE_DIM];
        for v in values.iter_mut().take(PROSODIC_DIM) {
            *v = rng.normal();
        }
        for &d in &spec.informative_dims {
            values[d] += spec.feature_signal * feat_score;
        }
        let spread = if noisy { spec.noisy_spread } else { 1.0 };
        for v in values.iter_mut().take(PROSODIC_DIM) {
            *v *= spread;
        }
        for v in values.iter_mut().skip(PROSODIC_DIM) {
            let z = spread * (rng.normal() + 0.5 * feat_score);
            *v = 1.0 / (1.0 + exp(-z));
        }
        let id = format!("{}{i:04}", spec.id_prefix);
        out.features.push(FeatureVector::from_raw(id, &values).expect("generated values are valid"));

        let mean: Vec<f64> = if corrupted {
            alloc::vec![0.0; spec.emb_dim]
        } else if spec.ordinal_embeddings {
            axis.iter().map(|a| a * score * spec.emb_signal).collect()
        } else {
            directions[c].iter().map(|a| a * spec.emb_signal).collect()
        };
        out.embeddings.push(mean.into_iter().map(|m| m + rng.normal()).collect());
        out.labels.push(ConfidenceLabel::from_index(c).expect("3 classes"));
        out.corrupted.push(corrupted);
        out.noisy.push(noisy);
    }
    out
}
