//! Binary matrix files and CSV field export.
//!
//! Matrix layout: magic `OIFS`, format version (u32), rows (u64), cols
//! (u64), then `rows * cols` column-major IEEE-754 doubles. All integers and
//! floats are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;

pub const MATRIX_MAGIC: &[u8; 4] = b"OIFS";
pub const MATRIX_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode_matrix(matrix: &DMatrix<f64>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * matrix.len());
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.ncols() as u64).to_le_bytes());
    // nalgebra storage is column-major already
    for v in matrix.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header ({} of {HEADER_LEN} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MATRIX_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MATRIX_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::Format(format!("dimensions {rows} x {cols} overflow")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < payload {
        return Err(Error::Format(format!(
            "truncated data: expected {payload} bytes, found {}",
            body.len()
        )));
    }
    if body.len() > payload {
        return Err(Error::Format(format!(
            "{} trailing bytes after matrix data",
            body.len() - payload
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_vec(rows as usize, cols as usize, values))
}

pub fn save_matrix(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_matrix(matrix)).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

/// Writes `x,y,u` rows in node order with 17 significant digits.
pub fn export_field_csv(path: &Path, mesh: &StructuredMesh, field: &[f64]) -> Result<()> {
    if field.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "exported field length",
            expected: mesh.num_nodes(),
            got: field.len(),
        });
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = String::with_capacity(64 * field.len());
    out.push_str("x,y,u\n");
    for (id, u) in field.iter().enumerate() {
        let [x, y] = mesh.node_coords(id);
        out.push_str(&format!("{x:.16e},{y:.16e},{u:.16e}\n"));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads back the `u` column of a file written by [`export_field_csv`].
pub fn read_field_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("x,y,u") {
        return Err(Error::Format("missing x,y,u header".into()));
    }
    lines
        .map(|line| {
            line.split(',')
                .nth(2)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("malformed row '{line}'")))
        })
        .collect()
}

/// Writes a small CSV table.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
