//! Small synthetic dataset on disk, for demos and end-to-end tests.
//!
//! The ground truth has weak embeddings on a fifth of its clips. The pool
//! mixes clean clips with low-evidence ones whose features sit near the
//! neutral point, which is where confidence filtering matters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use vocalconf_core::annotation::{AnnotationRecord, RatingValue};
use vocalconf_core::audio::{AudioClip, CANONICAL_RATE};
use vocalconf_core::evaluation::make_fold_plan;
use vocalconf_core::features::PROSODIC_DIM;
use vocalconf_core::label::ConfidenceLabel;
use vocalconf_core::rng::SeededRng;
use vocalconf_core::synthetic::{corpus, jittered_tone, white_noise, CorpusSpec};

use crate::annotations::to_line;
use crate::embeddings::{write_binary, Embeddings};
use crate::error::{Error, Result};
use crate::feature_store::{write_feature_store, AUX_COLUMNS};
use crate::json;
use crate::manifest::{ClipEntry, DatasetManifest, SplitRole};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub per_class: usize,
    pub pool_per_class: usize,
    pub k: usize,
    pub seed: u64,
    /// Also write a five-second tone per clip under `audio/`.
    pub audio: bool,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self { per_class: 40, pool_per_class: 40, k: 5, seed: 0, audio: false }
    }
}

/// Three simulated raters; each is right with its accuracy and otherwise
/// picks one of the two wrong classes.
const RATER_ACCURACY: [f64; 3] = [0.9, 0.8, 0.75];

/// Settings that train in seconds on the fixture.
pub const RUN_CONFIG: &str = "\
manifest = manifest.json
out_dir = out
seed = 0
k = 5
tau = 0.7
labeller.internal_folds = 0
labeller.max_epochs = 40
hybrid.epochs = 60
hybrid.lr_embedding_stream = 0.005
";

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the dataset into `dir` and returns the manifest path. `dir` also
/// gets a `run.cfg` pointing at it.
pub fn write_fixture(dir: impl AsRef<Path>, spec: &FixtureSpec) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let gt = corpus(&CorpusSpec { n_per_class: [spec.per_class; 3], corrupt_fraction: 0.2, seed: 10 + spec.seed, ..CorpusSpec::default() });
    let pool = corpus(&CorpusSpec {
        id_prefix: "pool",
        n_per_class: [spec.pool_per_class; 3],
        noisy_fraction: 0.35,
        noisy_spread: 0.12,
        noisy_shift: 1.0,
        seed: 50 + spec.seed,
        ..CorpusSpec::default()
    });

    let features: Vec<_> = gt.features.iter().chain(&pool.features).cloned().collect();
    write_feature_store(dir.join("features.csv"), &features)?;
    let embeddings: Embeddings =
        gt.ids().into_iter().zip(gt.embeddings.iter().cloned()).chain(pool.ids().into_iter().zip(pool.embeddings.iter().cloned())).collect();
    write_binary(dir.join("embeddings.emb"), &embeddings)?;

    let mut aux = AUX_COLUMNS.iter().fold(String::from("id"), |s, c| s + "," + c) + "\n";
    for f in &features {
        let v = f.values();
        aux += &v[PROSODIC_DIM..].iter().fold(f.id.clone(), |s, x| format!("{s},{x:?}"));
        aux.push('\n');
    }
    write_text(&dir.join("aux.csv"), &aux)?;

    let labels: BTreeMap<String, ConfidenceLabel> = gt.ids().into_iter().zip(gt.labels.iter().copied()).collect();
    let mut csv = String::from("clip_id,label\n");
    for (id, l) in &labels {
        csv += &format!("{id},{l}\n");
    }
    write_text(&dir.join("labels.csv"), &csv)?;

    let mut rng = SeededRng::new(spec.seed ^ 0xA11);
    let mut jsonl = String::new();
    let mut ts = 1_700_000_000.0;
    for (id, &truth) in &labels {
        for (r, acc) in RATER_ACCURACY.iter().enumerate() {
            let given = if rng.bernoulli(*acc) {
                truth
            } else {
                let others: Vec<_> = ConfidenceLabel::ALL.into_iter().filter(|&c| c != truth).collect();
                others[rng.index(2)]
            };
            ts += 1.0;
            jsonl += &to_line(&AnnotationRecord { clip_id: id.clone(), rater_id: format!("r{}", r + 1), value: RatingValue::Rated(given), timestamp: ts });
        }
    }
    write_text(&dir.join("annotations.jsonl"), &jsonl)?;

    let plan = make_fold_plan(&labels, spec.k, spec.seed, "fixture")?;
    json::write_fold_plan(dir.join("fold_plan.json"), &plan)?;

    let audio_dir = dir.join("audio");
    if spec.audio {
        std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    }
    let mut clips = Vec::new();
    for (corpus, role) in [(&gt, SplitRole::Labelled), (&pool, SplitRole::Pool)] {
        for (i, (id, label)) in corpus.ids().into_iter().zip(&corpus.labels).enumerate() {
            let rel = PathBuf::from("audio").join(format!("{id}.wav"));
            if spec.audio {
                let seed = spec.seed.wrapping_mul(7919).wrapping_add(i as u64);
                let f0 = 110.0 + 40.0 * label.index() as f64;
                let tone = jittered_tone(f0, CANONICAL_RATE, 5.0, 0.5, 0.01, seed);
                let noise = white_noise(tone.len(), 0.01, seed ^ 0xF00);
                let samples: Vec<f64> = tone.iter().zip(&noise).map(|(a, b)| a + b).collect();
                crate::wav::write_clip(dir.join(&rel), &AudioClip::new(id.clone(), samples, CANONICAL_RATE))?;
            }
            clips.push(ClipEntry { id, audio: rel, split_role: role });
        }
    }
    let manifest = DatasetManifest {
        clips,
        feature_store: "features.csv".into(),
        embedding_store: "embeddings.emb".into(),
        annotations: "annotations.jsonl".into(),
        fold_plan: "fold_plan.json".into(),
        labels: Some("labels.csv".into()),
        aux_probs: Some("aux.csv".into()),
    };
    let path = dir.join("manifest.json");
    json::write(&path, &manifest)?;
    write_text(&dir.join("run.cfg"), &RUN_CONFIG.replace("k = 5", &format!("k = {}", spec.k)).replace("seed = 0", &format!("seed = {}", spec.seed)))?;
    Ok(path)
}
