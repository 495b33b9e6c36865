//! Append-only JSON Lines annotation store and rater-matrix CSV.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use vocalconf_core::annotation::{AnnotationRecord, RaterMatrix, RatingValue};

use crate::csvio;
use crate::error::{Error, Result};

/// Reads every record; blank lines are skipped. A missing file is an
/// empty store.
pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

pub fn to_line(record: &AnnotationRecord) -> String {
    let mut s = serde_json::to_string(record).expect("record serializes");
    s.push('\n');
    s
}

/// Appends one line and syncs it to disk.
pub fn append_annotation(path: impl AsRef<Path>, record: &AnnotationRecord) -> Result<()> {
    let path = path.as_ref();
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_line(record).as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

fn cell(v: Option<RatingValue>) -> String {
    match v {
        None => String::new(),
        Some(RatingValue::NotClear) => "NC".into(),
        Some(RatingValue::Rated(l)) => l.index().to_string(),
    }
}

/// Rows are clips, columns raters; cells `0|1|2|NC|` (empty = missing).
pub fn rater_matrix_csv(m: &RaterMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::from("clip_id")];
    header.extend(m.raters.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (clip, row) in m.clips.iter().zip(&m.cells) {
        let mut rec = vec![clip.clone()];
        rec.extend(row.iter().map(|&v| cell(v)));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn write_rater_matrix(path: impl AsRef<Path>, m: &RaterMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, rater_matrix_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn read_rater_matrix(path: impl AsRef<Path>) -> Result<RaterMatrix> {
    let path = path.as_ref();
    let mut r = csvio::reader(path)?;
    let header = csvio::headers(path, &mut r)?;
    if header.first().map(String::as_str) != Some("clip_id") {
        return Err(Error::parse(path, 1, "first column must be `clip_id`"));
    }
    let raters = header[1..].to_vec();
    let mut clips = Vec::new();
    let mut cells = Vec::new();
    for (line, rec) in csvio::records(path, &mut r)? {
        clips.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|c| match c {
                "" => Ok(None),
                "NC" => Ok(Some(RatingValue::NotClear)),
                s => s
                    .parse::<usize>()
                    .ok()
                    .and_then(vocalconf_core::label::ConfidenceLabel::from_index)
                    .map(|l| Some(RatingValue::Rated(l)))
                    .ok_or_else(|| Error::parse(path, line, format!("cell `{s}` is not 0, 1, 2, NC or empty"))),
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    Ok(RaterMatrix::from_labels(clips, raters, cells))
}
