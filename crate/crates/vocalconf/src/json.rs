//! JSON files: pretty-printed, struct fields in declaration order and maps
//! sorted, so equal values give byte-identical files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use vocalconf_core::evaluation::FoldPlan;

use crate::error::{Error, Result};

pub fn to_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_string(value)).map_err(|e| Error::io(path, e))
}

pub fn read<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_fold_plan(path: impl AsRef<Path>, plan: &FoldPlan) -> Result<()> {
    write(path, plan)
}

/// Loads a plan and verifies its checksum.
pub fn read_fold_plan(path: impl AsRef<Path>) -> Result<FoldPlan> {
    let plan: FoldPlan = read(path)?;
    plan.verify()?;
    Ok(plan)
}
