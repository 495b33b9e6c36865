//! Dataset manifest (JSON). Relative paths resolve against the manifest's
//! directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    /// Part of the annotated ground truth.
    Labelled,
    /// Unlabelled pool for pseudo labelling.
    Pool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub id: String,
    pub audio: PathBuf,
    pub split_role: SplitRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub clips: Vec<ClipEntry>,
    pub feature_store: PathBuf,
    pub embedding_store: PathBuf,
    pub annotations: PathBuf,
    pub fold_plan: PathBuf,
    /// Consensus labels (`clip_id,label,...`). When absent, labels come
    /// from Dawid-Skene over the annotations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Auxiliary probabilities (`id,disf_block,...,stress`) for `extract`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_probs: Option<PathBuf>,
}

impl DatasetManifest {
    /// Ids are unique, so no clip can be both labelled and pool.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.clips {
            if c.id.is_empty() {
                return Err(Error::Manifest("empty clip id".into()));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(Error::Manifest(format!("clip id `{}` listed more than once", c.id)));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: DatasetManifest = json::read(path)?;
        m.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut m.clips {
            abs(&mut c.audio);
        }
        for p in [&mut m.feature_store, &mut m.embedding_store, &mut m.annotations, &mut m.fold_plan] {
            abs(p);
        }
        for p in [&mut m.labels, &mut m.aux_probs].into_iter().flatten() {
            abs(p);
        }
        Ok(m)
    }

    pub fn ids(&self, role: SplitRole) -> BTreeSet<String> {
        self.clips.iter().filter(|c| c.split_role == role).map(|c| c.id.clone()).collect()
    }

    pub fn clip(&self, id: &str) -> Option<&ClipEntry> {
        self.clips.iter().find(|c| c.id == id)
    }
}
