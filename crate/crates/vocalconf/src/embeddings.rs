//! Embedding store: `EMB1` binary or `id,e_000..` CSV.
//!
//! Binary layout: magic `EMB1`, u32 dim, then per record a u16 id length,
//! the UTF-8 id and `dim` little-endian f32 values.

use std::collections::BTreeMap;
use std::path::Path;

use crate::csvio::{self, num};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";

pub type Embeddings = BTreeMap<String, Vec<f64>>;

pub fn encode(store: &Embeddings) -> std::result::Result<Vec<u8>, String> {
    let dim = store.values().next().map_or(0, Vec::len);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (id, v) in store {
        if v.len() != dim {
            return Err(format!("`{id}` has {} values, expected {dim}", v.len()));
        }
        let len = u16::try_from(id.len()).map_err(|_| format!("id `{id}` is longer than 65535 bytes"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for &x in v {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Embeddings, String> {
    let mut cur = bytes;
    let mut take = |n: usize| -> std::result::Result<&[u8], String> {
        if cur.len() < n {
            return Err(format!("truncated: needed {n} more bytes, {} left", cur.len()));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(4)? != MAGIC {
        return Err("missing EMB1 magic".into());
    }
    let dim = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let mut out = BTreeMap::new();
    loop {
        let len = match take(2) {
            Ok(b) => u16::from_le_bytes(b.try_into().expect("2 bytes")) as usize,
            Err(_) => break,
        };
        let id = std::str::from_utf8(take(len)?).map_err(|_| "id is not UTF-8".to_string())?.to_string();
        let raw = take(dim * 4)?;
        let v: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("`{id}` has a non-finite value"));
        }
        if out.insert(id.clone(), v).is_some() {
            return Err(format!("duplicate id `{id}`"));
        }
    }
    Ok(out)
}

pub fn write_binary(path: impl AsRef<Path>, store: &Embeddings) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(store).map_err(|m| Error::format(path, m))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_csv(path: impl AsRef<Path>, store: &Embeddings) -> Result<()> {
    let path = path.as_ref();
    let dim = store.values().next().map_or(0, Vec::len);
    let mut w = csvio::writer(path)?;
    let mut header = vec![String::from("id")];
    header.extend((0..dim).map(|i| format!("e_{i:03}")));
    csvio::write_row(path, &mut w, &header)?;
    for (id, v) in store {
        let mut row = vec![id.clone()];
        row.extend(v.iter().copied().map(num));
        csvio::write_row(path, &mut w, &row)?;
    }
    csvio::flush(path, &mut w)
}

fn read_csv(path: &Path) -> Result<Embeddings> {
    let mut r = csvio::reader(path)?;
    let header = csvio::headers(path, &mut r)?;
    let dim = header.len().saturating_sub(1);
    let mut expected = vec![String::from("id")];
    expected.extend((0..dim).map(|i| format!("e_{i:03}")));
    if dim == 0 || header != expected {
        return Err(Error::parse(path, 1, "header must be `id,e_000,...`"));
    }
    let mut out = BTreeMap::new();
    for (line, rec) in csvio::records(path, &mut r)? {
        let v = (1..=dim).map(|i| csvio::parse_f64(path, line, &header[i], &rec[i])).collect::<Result<Vec<_>>>()?;
        if out.insert(rec[0].to_string(), v).is_some() {
            return Err(Error::parse(path, line, format!("duplicate id `{}`", &rec[0])));
        }
    }
    Ok(out)
}

/// Detects the format from the magic bytes.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Embeddings> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        decode(&bytes).map_err(|m| Error::format(path, m))
    } else {
        read_csv(path)
    }
}
