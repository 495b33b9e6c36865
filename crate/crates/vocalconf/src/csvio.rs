//! Small CSV helpers shared by the table formats.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

pub(crate) fn headers(path: &Path, r: &mut csv::Reader<File>) -> Result<Vec<String>> {
    Ok(r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect())
}

pub(crate) fn expect_headers(path: &Path, r: &mut csv::Reader<File>, expected: &[String]) -> Result<()> {
    let got = headers(path, r)?;
    if got != expected {
        let first_bad = got.iter().zip(expected).position(|(a, b)| a != b).unwrap_or(got.len().min(expected.len()));
        return Err(Error::parse(
            path,
            1,
            format!(
                "unexpected header at column {}: got `{}`, expected `{}` ({} columns, expected {})",
                first_bad + 1,
                got.get(first_bad).map_or("", String::as_str),
                expected.get(first_bad).map_or("", String::as_str),
                got.len(),
                expected.len()
            ),
        ));
    }
    Ok(())
}

/// Yields `(line, record)` pairs.
pub(crate) fn records(path: &Path, r: &mut csv::Reader<File>) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec));
    }
    Ok(out)
}

pub(crate) fn parse_f64(path: &Path, line: usize, column: &str, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::parse(path, line, format!("column `{column}`: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("column `{column}`: non-finite value")));
    }
    Ok(v)
}

pub(crate) fn write_row<W: std::io::Write>(path: &Path, w: &mut csv::Writer<W>, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(|e| csv_err(path, e))
}

pub(crate) fn flush<W: std::io::Write>(path: &Path, w: &mut csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Shortest representation that parses back to the same value.
pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}
