//! Feature-store CSV, auxiliary-probability CSV and external prosodic ingest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use vocalconf_core::features::{assemble_feature_vector, FeatureVector, AUX_DIM, DISFLUENCY_DIM, FEATURE_DIM, PROSODIC_DIM};

use crate::csvio::{self, num};
use crate::error::{Error, Result};

pub const AUX_COLUMNS: [&str; AUX_DIM] = ["disf_block", "disf_prolong", "disf_interj", "disf_wordrep", "disf_soundrep", "stress"];

/// `id,f_000..f_087,disf_block,...,stress`
pub fn header() -> Vec<String> {
    let mut h = vec![String::from("id")];
    h.extend((0..PROSODIC_DIM).map(|i| format!("f_{i:03}")));
    h.extend(AUX_COLUMNS.iter().map(|s| s.to_string()));
    h
}

pub fn write_feature_store(path: impl AsRef<Path>, vectors: &[FeatureVector]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csvio::writer(path)?;
    csvio::write_row(path, &mut w, &header())?;
    for fv in vectors {
        let mut row = vec![fv.id.clone()];
        row.extend(fv.values().into_iter().map(num));
        csvio::write_row(path, &mut w, &row)?;
    }
    csvio::flush(path, &mut w)
}

/// Reads raw (unnormalized) vectors; ids must be unique.
pub fn read_feature_store(path: impl AsRef<Path>) -> Result<Vec<FeatureVector>> {
    let path = path.as_ref();
    let mut r = csvio::reader(path)?;
    let header = header();
    csvio::expect_headers(path, &mut r, &header)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, rec) in csvio::records(path, &mut r)? {
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id `{id}`")));
        }
        let values = (1..=FEATURE_DIM).map(|i| csvio::parse_f64(path, line, &header[i], &rec[i])).collect::<Result<Vec<_>>>()?;
        let fv = FeatureVector::from_raw(id, &values).map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(fv);
    }
    Ok(out)
}

/// `id,disf_block,...,stress` rows of probabilities from external models.
pub fn read_aux(path: impl AsRef<Path>) -> Result<BTreeMap<String, [f64; AUX_DIM]>> {
    let path = path.as_ref();
    let mut r = csvio::reader(path)?;
    let mut expected = vec![String::from("id")];
    expected.extend(AUX_COLUMNS.iter().map(|s| s.to_string()));
    csvio::expect_headers(path, &mut r, &expected)?;
    let mut out = BTreeMap::new();
    for (line, rec) in csvio::records(path, &mut r)? {
        let mut p = [0.0; AUX_DIM];
        for (j, v) in p.iter_mut().enumerate() {
            *v = csvio::parse_f64(path, line, AUX_COLUMNS[j], &rec[j + 1])?;
            if !(0.0..=1.0).contains(v) {
                return Err(Error::parse(path, line, format!("column `{}`: {} is not a probability", AUX_COLUMNS[j], v)));
            }
        }
        if out.insert(rec[0].to_string(), p).is_some() {
            return Err(Error::parse(path, line, format!("duplicate id `{}`", &rec[0])));
        }
    }
    Ok(out)
}

/// Joins an external prosodic table (first column the id, then exactly 88
/// numeric columns under any names, in the order the layout expects) with
/// the auxiliary probabilities. Every prosodic id needs an aux row.
pub fn ingest_external(prosodic: impl AsRef<Path>, aux: impl AsRef<Path>) -> Result<Vec<FeatureVector>> {
    let path = prosodic.as_ref();
    let aux = read_aux(aux)?;
    let mut r = csvio::reader(path)?;
    let header = csvio::headers(path, &mut r)?;
    if header.len() != PROSODIC_DIM + 1 {
        return Err(Error::parse(path, 1, format!("expected an id column and {PROSODIC_DIM} feature columns, got {} columns", header.len())));
    }
    let mut out = Vec::new();
    for (line, rec) in csvio::records(path, &mut r)? {
        let id = &rec[0];
        let values = (1..=PROSODIC_DIM).map(|i| csvio::parse_f64(path, line, &header[i], &rec[i])).collect::<Result<Vec<_>>>()?;
        let a = aux.get(id).ok_or_else(|| Error::Clip { id: id.to_string(), message: "no auxiliary probabilities".into() })?;
        let fv = assemble_feature_vector(id, &values, &a[..DISFLUENCY_DIM], a[DISFLUENCY_DIM]).map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(fv);
    }
    Ok(out)
}
