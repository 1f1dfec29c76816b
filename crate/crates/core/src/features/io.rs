//! Feature dumps: JSON lines (one record per sample, with metadata) and a
//! flat little-endian matrix (`u32` rows, `u32` cols, then `f32` values).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::FeatureVector;
use crate::error::{Error, Result};

pub fn write_features_jsonl(path: impl AsRef<Path>, features: &[FeatureVector]) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for fv in features {
        serde_json::to_writer(&mut w, fv)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_jsonl(path: impl AsRef<Path>) -> Result<Vec<FeatureVector>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fv: FeatureVector = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        fv.validate()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        out.push(fv);
    }
    Ok(out)
}

/// Writes the value matrix only; all rows must share a length.
pub fn write_features_bin(path: impl AsRef<Path>, features: &[FeatureVector]) -> Result<()> {
    let path = path.as_ref();
    let cols = features.first().map_or(0, |f| f.values.len());
    if features.iter().any(|f| f.values.len() != cols) {
        return Err(Error::Shape("feature rows differ in length".into()));
    }
    let rows = u32::try_from(features.len()).map_err(|_| Error::Shape("too many rows".into()))?;
    let cols32 = u32::try_from(cols).map_err(|_| Error::Shape("too many columns".into()))?;
    let mut buf = Vec::with_capacity(8 + 4 * features.len() * cols);
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols32.to_le_bytes());
    for f in features {
        for &v in &f.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`write_features_bin`] as rows of `f32`.
pub fn read_features_bin(path: impl AsRef<Path>) -> Result<Vec<Vec<f32>>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::parse(path, "missing header"));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != rows * cols * 4 {
        return Err(Error::parse(
            path,
            format!("expected {} data bytes for {rows}x{cols}, found {}", rows * cols * 4, body.len()),
        ));
    }
    if cols == 0 {
        return Ok(vec![Vec::new(); rows]);
    }
    Ok(body
        .chunks_exact(4 * cols)
        .take(rows)
        .map(|row| {
            row.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        })
        .collect())
}
