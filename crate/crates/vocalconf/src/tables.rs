//! Label, logits, consensus and pseudo-label tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vocalconf_core::annotation::ConsensusItem;
use vocalconf_core::label::ConfidenceLabel;
use vocalconf_core::pseudo::{PseudoSample, PseudoSet};

use crate::csvio::{self, num};
use crate::error::{Error, Result};
use crate::json;

fn column(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::parse(path, 1, format!("missing column `{name}`")))
}

fn parse_label(path: &Path, line: usize, s: &str) -> Result<ConfidenceLabel> {
    if let Ok(l) = s.parse() {
        return Ok(l);
    }
    s.parse::<usize>()
        .ok()
        .and_then(ConfidenceLabel::from_index)
        .ok_or_else(|| Error::parse(path, line, format!("`{s}` is not a label (low|medium|high or 0|1|2)")))
}

/// Reads `clip_id` and `label` columns; other columns are ignored, so a
/// consensus table works as a label file.
pub fn read_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, ConfidenceLabel>> {
    let path = path.as_ref();
    let mut r = csvio::reader(path)?;
    let header = csvio::headers(path, &mut r)?;
    let (ci, li) = (column(path, &header, "clip_id")?, column(path, &header, "label")?);
    let mut out = BTreeMap::new();
    for (line, rec) in csvio::records(path, &mut r)? {
        let label = parse_label(path, line, &rec[li])?;
        if out.insert(rec[ci].to_string(), label).is_some() {
            return Err(Error::parse(path, line, format!("duplicate id `{}`", &rec[ci])));
        }
    }
    Ok(out)
}

pub fn write_consensus(path: impl AsRef<Path>, items: &[ConsensusItem]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csvio::writer(path)?;
    csvio::write_row(path, &mut w, &["clip_id", "label", "max_posterior", "ambiguous"].map(String::from))?;
    for it in items {
        csvio::write_row(path, &mut w, &[it.clip_id.clone(), it.label.to_string(), num(it.max_posterior), it.ambiguous.to_string()])?;
    }
    csvio::flush(path, &mut w)
}

/// Rows of `id,z_0..z_{c-1},label`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsTable {
    pub ids: Vec<String>,
    pub logits: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn read_logits(path: impl AsRef<Path>) -> Result<LogitsTable> {
    let path = path.as_ref();
    let mut r = csvio::reader(path)?;
    let header = csvio::headers(path, &mut r)?;
    let classes = header.len().saturating_sub(2);
    let mut expected = vec![String::from("id")];
    expected.extend((0..classes).map(|i| format!("z_{i}")));
    expected.push("label".into());
    if classes < 2 || header != expected {
        return Err(Error::parse(path, 1, "header must be `id,z_0,...,z_{c-1},label` with at least 2 classes"));
    }
    let mut t = LogitsTable { ids: Vec::new(), logits: Vec::new(), labels: Vec::new() };
    for (line, rec) in csvio::records(path, &mut r)? {
        t.ids.push(rec[0].to_string());
        t.logits.push((1..=classes).map(|i| csvio::parse_f64(path, line, &header[i], &rec[i])).collect::<Result<_>>()?);
        let label: usize = rec[classes + 1]
            .parse()
            .ok()
            .filter(|&l| l < classes)
            .ok_or_else(|| Error::parse(path, line, format!("label `{}` is not a class index below {classes}", &rec[classes + 1])))?;
        t.labels.push(label);
    }
    Ok(t)
}

/// `id,p_0..p_{c-1}` to any writer.
pub fn write_probabilities<W: std::io::Write>(out: W, ids: &[String], probs: &[Vec<f64>]) -> Result<()> {
    let path = Path::new("<stdout>");
    let mut w = csv::Writer::from_writer(out);
    let classes = probs.first().map_or(0, Vec::len);
    let mut header = vec![String::from("id")];
    header.extend((0..classes).map(|i| format!("p_{i}")));
    csvio::write_row(path, &mut w, &header)?;
    for (id, p) in ids.iter().zip(probs) {
        let mut row = vec![id.clone()];
        row.extend(p.iter().copied().map(num));
        csvio::write_row(path, &mut w, &row)?;
    }
    csvio::flush(path, &mut w)
}

/// JSON sidecar written next to a pseudo-label CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSidecar {
    /// Labeller checkpoint hash.
    pub provenance: String,
    pub tau: f64,
    pub pool_size: usize,
    pub retained: usize,
    pub fold: usize,
    pub class_histogram: BTreeMap<String, usize>,
}

pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

/// Writes `clip_id,label,max_prob,fold` and the sidecar.
pub fn write_pseudo_set(path: impl AsRef<Path>, set: &PseudoSet) -> Result<()> {
    let path = path.as_ref();
    let mut w = csvio::writer(path)?;
    csvio::write_row(path, &mut w, &["clip_id", "label", "max_prob", "fold"].map(String::from))?;
    for s in &set.samples {
        csvio::write_row(path, &mut w, &[s.clip_id.clone(), s.label.to_string(), num(s.max_prob), s.fold.to_string()])?;
    }
    csvio::flush(path, &mut w)?;
    let hist = set.class_histogram();
    let sidecar = PseudoSidecar {
        provenance: set.provenance.clone(),
        tau: set.tau,
        pool_size: set.pool_size,
        retained: set.retained,
        fold: set.fold,
        class_histogram: ConfidenceLabel::ALL.iter().map(|l| (l.to_string(), hist[l.index()])).collect(),
    };
    json::write(sidecar_path(path), &sidecar)
}

pub fn read_pseudo_set(path: impl AsRef<Path>) -> Result<PseudoSet> {
    let path = path.as_ref();
    let sidecar: PseudoSidecar = json::read(sidecar_path(path))?;
    let mut r = csvio::reader(path)?;
    csvio::expect_headers(path, &mut r, &["clip_id", "label", "max_prob", "fold"].map(String::from))?;
    let mut samples = Vec::new();
    for (line, rec) in csvio::records(path, &mut r)? {
        let fold: usize = rec[3].parse().map_err(|_| Error::parse(path, line, format!("fold `{}` is not an integer", &rec[3])))?;
        samples.push(PseudoSample {
            clip_id: rec[0].to_string(),
            label: parse_label(path, line, &rec[1])?,
            max_prob: csvio::parse_f64(path, line, "max_prob", &rec[2])?,
            fold,
        });
    }
    if samples.len() != sidecar.retained {
        return Err(Error::format(path, format!("{} rows but the sidecar says {} were retained", samples.len(), sidecar.retained)));
    }
    Ok(PseudoSet {
        samples,
        provenance: sidecar.provenance,
        tau: sidecar.tau,
        pool_size: sidecar.pool_size,
        retained: sidecar.retained,
        fold: sidecar.fold,
    })
}
