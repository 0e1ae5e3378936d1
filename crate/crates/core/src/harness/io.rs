//! File formats.
//!
//! Fields are stored as three little-endian `u64` (rows, columns, 1)
//! followed by `rows · columns` little-endian `f64` in row-major order. Rows
//! run along `x₂` and columns along `x₁`, so a 1D field is a single row.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Field;

pub fn field_shape(field: &Field) -> [u64; 3] {
    let n = field.domain().nodes_per_axis(field.layout());
    [n[1] as u64, n[0] as u64, 1]
}

pub fn write_field_bin(path: &Path, field: &Field) -> Result<()> {
    write_array_bin(path, field_shape(field), field.values())
}

pub fn write_array_bin(path: &Path, shape: [u64; 3], values: &[f64]) -> Result<()> {
    let expected = (shape[0] * shape[1] * shape[2]) as usize;
    if expected != values.len() {
        return Err(Error::DimensionMismatch {
            context: "field file",
            expected,
            found: values.len(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    for s in shape {
        w.write_all(&s.to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_bin(path: &Path) -> Result<([u64; 3], Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || (bytes.len() - 24) % 8 != 0 {
        return Err(Error::Config(format!(
            "{}: not a field file",
            path.display()
        )));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let shape = [word(0), word(1), word(2)];
    let values: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if (shape[0] * shape[1] * shape[2]) as usize != values.len() {
        return Err(Error::Config(format!(
            "{}: header {shape:?} does not match {} values",
            path.display(),
            values.len()
        )));
    }
    Ok((shape, values))
}

/// Formats an optional number for a CSV cell; `None` becomes blank.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
