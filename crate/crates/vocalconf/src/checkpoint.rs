//! Versioned binary model checkpoints.
//!
//! Layout: magic `CSNN`, u16 format version, u32 metadata length, the JSON
//! metadata, then every stream's layers in declaration order, each layer
//! as its parameters followed by any batch-norm running statistics, all
//! little-endian f64.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vocalconf_core::calibration::CalibrationModel;
use vocalconf_core::hybrid::{FusionMode, HybridModel};
use vocalconf_core::neural::{LayerSpec, MlpModel};
use vocalconf_core::pseudo::Labeller;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSNN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Labeller,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub name: String,
    pub seed: u64,
    pub layers: Vec<LayerSpec>,
    /// Number of f64 values this stream contributes to the blob.
    pub values: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub streams: Vec<StreamMeta>,
    /// Fingerprint of the normalizer the model's inputs must come from.
    pub normalizer: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationModel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<HybridMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridMeta {
    pub lambda_fv: f64,
    pub mode: FusionMode,
    pub emb_dim: usize,
}

fn stream(name: &str, m: &MlpModel) -> StreamMeta {
    StreamMeta { name: name.into(), seed: m.seed, layers: m.specs(), values: m.state_len() }
}

fn encode(meta: &CheckpointMeta, models: &[&MlpModel]) -> Vec<u8> {
    let json = serde_json::to_vec(meta).expect("metadata serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for m in models {
        for v in m.state_vector() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode(bytes: &[u8]) -> std::result::Result<(CheckpointMeta, Vec<MlpModel>), String> {
    if bytes.len() < 10 || &bytes[..4] != MAGIC {
        return Err("missing CSNN magic".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let body = &bytes[10..];
    if body.len() < len {
        return Err("truncated metadata".into());
    }
    let meta: CheckpointMeta = serde_json::from_slice(&body[..len]).map_err(|e| format!("metadata: {e}"))?;
    let blob = &body[len..];
    if blob.len() % 8 != 0 {
        return Err("parameter blob is not a whole number of f64 values".into());
    }
    let values: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let expected: usize = meta.streams.iter().map(|s| s.values).sum();
    if values.len() != expected {
        return Err(format!("parameter blob has {} values, metadata declares {expected}", values.len()));
    }
    let mut models = Vec::new();
    let mut off = 0;
    for s in &meta.streams {
        let mut m = MlpModel::new(&s.layers, s.seed).map_err(|e| format!("stream `{}`: {e}", s.name))?;
        m.load_state_vector(&values[off..off + s.values]).map_err(|e| format!("stream `{}`: {e}", s.name))?;
        m.eval();
        off += s.values;
        models.push(m);
    }
    Ok((meta, models))
}

pub fn encode_labeller(l: &Labeller) -> Vec<u8> {
    let meta = CheckpointMeta {
        kind: ModelKind::Labeller,
        streams: vec![stream("classifier", &l.model)],
        normalizer: Some(l.normalizer_fingerprint),
        calibration: Some(l.calibration),
        train_ids: l.train_ids.clone(),
        hybrid: None,
    };
    encode(&meta, &[&l.model])
}

pub fn decode_labeller(bytes: &[u8]) -> std::result::Result<Labeller, String> {
    let (meta, mut models) = decode(bytes)?;
    match (&meta.kind, meta.normalizer, meta.calibration, models.len()) {
        (ModelKind::Labeller, Some(normalizer_fingerprint), Some(calibration), 1) => Ok(Labeller {
            model: models.remove(0),
            calibration,
            normalizer_fingerprint,
            train_ids: meta.train_ids,
        }),
        _ => Err("not a labeller checkpoint".into()),
    }
}

pub fn encode_hybrid(m: &HybridModel) -> Vec<u8> {
    let meta = CheckpointMeta {
        kind: ModelKind::Hybrid,
        streams: vec![stream("projection", &m.projection), stream("feature_stream", &m.feature_stream)],
        normalizer: m.normalizer_fingerprint,
        calibration: None,
        train_ids: Vec::new(),
        hybrid: Some(HybridMeta { lambda_fv: m.lambda_fv, mode: m.mode, emb_dim: m.emb_dim }),
    };
    encode(&meta, &[&m.projection, &m.feature_stream])
}

pub fn decode_hybrid(bytes: &[u8]) -> std::result::Result<HybridModel, String> {
    let (meta, mut models) = decode(bytes)?;
    match (&meta.kind, meta.hybrid, models.len()) {
        (ModelKind::Hybrid, Some(h), 2) => {
            let feature_stream = models.pop().expect("two streams");
            let projection = models.pop().expect("two streams");
            Ok(HybridModel {
                projection,
                feature_stream,
                lambda_fv: h.lambda_fv,
                mode: h.mode,
                emb_dim: h.emb_dim,
                normalizer_fingerprint: meta.normalizer,
            })
        }
        _ => Err("not a hybrid checkpoint".into()),
    }
}

pub fn save_labeller(path: impl AsRef<Path>, l: &Labeller) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_labeller(l)).map_err(|e| Error::io(path, e))
}

pub fn load_labeller(path: impl AsRef<Path>) -> Result<Labeller> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labeller(&bytes).map_err(|m| Error::format(path, m))
}

pub fn save_hybrid(path: impl AsRef<Path>, m: &HybridModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_hybrid(m)).map_err(|e| Error::io(path, e))
}

pub fn load_hybrid(path: impl AsRef<Path>) -> Result<HybridModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_hybrid(&bytes).map_err(|m| Error::format(path, m))
}
