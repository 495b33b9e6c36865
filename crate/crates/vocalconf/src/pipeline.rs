//! Glue between files on disk and the core stages.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use vocalconf_core::annotation::{build_rater_matrix, dawid_skene, derive_consensus_dataset};
use vocalconf_core::audio::{denoise, preprocess, AudioClip, CANONICAL_RATE};
use vocalconf_core::evaluation::{CvData, FoldPlan, LabelledItem, PoolItem};
use vocalconf_core::features::{assemble_feature_vector, extract_prosodic, FeatureVector, Normalizer, AUX_DIM, DISFLUENCY_DIM};
use vocalconf_core::hybrid::{HybridSample, Source};
use vocalconf_core::label::ConfidenceLabel;

use crate::annotations::read_annotations;
use crate::config::RunConfig;
use crate::embeddings::{read_embeddings, Embeddings};
use crate::error::{Error, Result};
use crate::feature_store::{read_aux, read_feature_store};
use crate::manifest::{DatasetManifest, SplitRole};
use crate::tables::read_labels;
use crate::wav::read_clip;

/// Loads, resamples, normalizes and (optionally) denoises one clip.
pub fn canonical_clip(path: &Path, id: &str, cfg: &RunConfig) -> Result<AudioClip> {
    if !path.exists() {
        return Err(Error::Clip { id: id.into(), message: format!("audio file {} does not exist", path.display()) });
    }
    let clip = read_clip(path, id)?;
    let clip = preprocess(&clip, CANONICAL_RATE)?;
    if cfg.denoise_enabled {
        Ok(denoise(&clip, &cfg.denoise)?)
    } else {
        Ok(clip)
    }
}

/// Extracts the 94-dim vector for every manifest clip. Clips without an
/// auxiliary row get zero probabilities and a warning.
pub fn extract_all(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Vec<FeatureVector>> {
    let aux = match &manifest.aux_probs {
        Some(p) => read_aux(p)?,
        None => BTreeMap::new(),
    };
    let mut out = Vec::new();
    for c in &manifest.clips {
        let clip = canonical_clip(&c.audio, &c.id, cfg)?;
        let prosodic = extract_prosodic(&clip, &cfg.frame).map_err(|e| Error::Clip { id: c.id.clone(), message: e.to_string() })?;
        let a = aux.get(&c.id).copied().unwrap_or_else(|| {
            log::warn!("clip `{}` has no auxiliary probabilities; using zeros", c.id);
            [0.0; AUX_DIM]
        });
        out.push(assemble_feature_vector(&c.id, &prosodic.values, &a[..DISFLUENCY_DIM], a[DISFLUENCY_DIM])?);
    }
    Ok(out)
}

/// Labels for the manifest's labelled clips: the labels file if given,
/// otherwise Dawid-Skene consensus over the annotations.
pub fn labels(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<BTreeMap<String, ConfidenceLabel>> {
    let labelled = manifest.ids(SplitRole::Labelled);
    let all = match &manifest.labels {
        Some(p) => read_labels(p)?,
        None => {
            let records: Vec<_> = read_annotations(&manifest.annotations)?.into_iter().filter(|r| labelled.contains(&r.clip_id)).collect();
            let matrix = build_rater_matrix(&records);
            let ds = dawid_skene(&matrix, cfg.ds_max_iters, cfg.ds_tol)?;
            derive_consensus_dataset(&ds).into_iter().map(|c| (c.clip_id, c.label)).collect()
        }
    };
    for id in all.keys() {
        if !labelled.contains(id) {
            return Err(Error::Clip { id: id.clone(), message: "has a label but is not a labelled clip in the manifest".into() });
        }
    }
    Ok(all)
}

/// Stores loaded once per command.
pub struct Stores {
    pub features: BTreeMap<String, FeatureVector>,
    pub embeddings: Embeddings,
    pub labels: BTreeMap<String, ConfidenceLabel>,
    pub pool_ids: BTreeSet<String>,
}

impl Stores {
    pub fn load(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Self> {
        let features = read_feature_store(&manifest.feature_store)?.into_iter().map(|f| (f.id.clone(), f)).collect();
        let embeddings = read_embeddings(&manifest.embedding_store)?;
        let labels = labels(manifest, cfg)?;
        let pool_ids = manifest.ids(SplitRole::Pool);
        Ok(Self { features, embeddings, labels, pool_ids })
    }

    fn feature(&self, id: &str) -> Result<&FeatureVector> {
        self.features.get(id).ok_or_else(|| Error::Clip { id: id.into(), message: "missing from the feature store".into() })
    }

    fn embedding(&self, id: &str) -> Result<&Vec<f64>> {
        self.embeddings.get(id).ok_or_else(|| Error::Clip { id: id.into(), message: "missing from the embedding store".into() })
    }

    /// Ground truth and pool keyed by id. Pool clips absent from either
    /// store are skipped with a warning; labelled clips must be present.
    pub fn cv_data(&self) -> Result<CvData> {
        let mut data = CvData::default();
        for (id, &label) in &self.labels {
            data.ground_truth.insert(id.clone(), LabelledItem { features: self.feature(id)?.clone(), embedding: self.embedding(id)?.clone(), label });
        }
        for id in &self.pool_ids {
            match (self.features.get(id), self.embeddings.get(id)) {
                (Some(f), Some(e)) => {
                    data.pool.insert(id.clone(), PoolItem { features: f.clone(), embedding: e.clone() });
                }
                _ => log::warn!("pool clip `{id}` is missing from a store; skipped"),
            }
        }
        Ok(data)
    }

    /// Normalizer fitted on the fold's training ids.
    pub fn fold_normalizer(&self, plan: &FoldPlan, fold: usize) -> Result<Normalizer> {
        let train = plan.train_ids(fold);
        let vectors = train.iter().map(|id| self.feature(id)).collect::<Result<Vec<_>>>()?;
        Ok(Normalizer::fit(vectors)?)
    }

    pub fn normalized(&self, norm: &Normalizer, ids: &BTreeSet<String>) -> Result<Vec<FeatureVector>> {
        ids.iter().map(|id| Ok(norm.apply(self.feature(id)?)?)).collect()
    }

    pub fn samples(&self, norm: &Normalizer, ids: &BTreeSet<String>, label: impl Fn(&str) -> Option<ConfidenceLabel>, source: Source) -> Result<Vec<HybridSample>> {
        ids.iter()
            .map(|id| {
                let label = label(id).ok_or_else(|| Error::Clip { id: id.clone(), message: "has no label".into() })?;
                Ok(HybridSample { id: id.clone(), features: norm.apply(self.feature(id)?)?, embedding: self.embedding(id)?.clone(), label, source })
            })
            .collect()
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything needed to reproduce a `cv` run.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub resolved_config: String,
    pub fold_plan_checksum: String,
    pub store_hashes: BTreeMap<String, String>,
    pub tool_version: &'static str,
}

pub fn provenance(manifest: &DatasetManifest, cfg: &RunConfig, plan: &FoldPlan) -> Result<Provenance> {
    let mut store_hashes = BTreeMap::new();
    store_hashes.insert("feature_store".into(), file_sha256(&manifest.feature_store)?);
    store_hashes.insert("embedding_store".into(), file_sha256(&manifest.embedding_store)?);
    match &manifest.labels {
        Some(p) => store_hashes.insert("labels".into(), file_sha256(p)?),
        None => store_hashes.insert("annotations".into(), file_sha256(&manifest.annotations)?),
    };
    Ok(Provenance {
        resolved_config: cfg.to_text(),
        fold_plan_checksum: plan.checksum.clone(),
        store_hashes,
        tool_version: env!("CARGO_PKG_VERSION"),
    })
}
