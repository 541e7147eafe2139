//! Binary field dump and CSV slice export.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `b"SPDE2DF\0"`                      |
//! | 8      | 4    | format version, `u32`, currently 1        |
//! | 12     | 8    | `N`, `u64`                                |
//! | 20     | 8    | `M₁`, `u64`                               |
//! | 28     | 8    | `M₂`, `u64`                               |
//! | 36     | 8·V  | `V = (N+1)(M₁+1)(M₂+1)` values, `f64`, row-major over `(i, j₁, j₂)` |
//!
//! Provenance, when present, is written next to the dump as JSON by
//! [`write_provenance`].

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::simulator::{FieldSample, Provenance, SpaceTimeGrid};

pub const MAGIC: &[u8; 8] = b"SPDE2DF\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 36;

pub fn write_field<W: Write>(mut w: W, field: &FieldSample) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [g.n, g.m1, g.m2] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * g.len());
    for v in field.values().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<FieldSample> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|e| Error::Format(format!("short header: {e}")))?;
    if &header[..8] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = |o: usize| -> Result<usize> {
        let v = u64::from_le_bytes(header[o..o + 8].try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} too large")))
    };
    let grid = SpaceTimeGrid::new(dim(12)?, dim(20)?, dim(28)?).map_err(|e| Error::Format(e.to_string()))?;
    let count = grid.len();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * count {
        return Err(Error::Format(format!("expected {} value bytes, found {}", 8 * count, bytes.len())));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let values = Array3::from_shape_vec(grid.shape(), data).expect("length checked");
    FieldSample::from_values(values, grid)
}

/// Writes `field` to `path` and, if it carries provenance, a JSON sidecar
/// at `path` with `.json` appended.
pub fn save_field(path: &Path, field: &FieldSample) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_field(std::io::BufWriter::new(file), field)?;
    if let Some(p) = field.provenance() {
        write_provenance(&sidecar(path), p)?;
    }
    Ok(())
}

/// Reads a dump and its sidecar, if one exists.
pub fn load_field(path: &Path) -> Result<FieldSample> {
    let file = std::fs::File::open(path)?;
    let field = read_field(std::io::BufReader::new(file))?;
    let side = sidecar(path);
    if side.exists() {
        let p: Provenance = serde_json::from_reader(std::fs::File::open(side)?)?;
        return Ok(field.with_provenance(p));
    }
    Ok(field)
}

pub fn write_provenance(path: &Path, p: &Provenance) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(f, p)?;
    Ok(())
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// CSV of the spatial slice at time index `i`: header `y\z` followed by the
/// `z_j` values, then one row per `y_j`.
pub fn write_time_slice_csv<W: Write>(mut w: W, field: &FieldSample, i: usize) -> Result<()> {
    let g = field.grid();
    if i > g.n {
        return Err(Error::GridMismatch(format!("time index {i} exceeds N = {}", g.n)));
    }
    write!(w, "y\\z")?;
    for j2 in 0..=g.m2 {
        write!(w, ",{}", g.z(j2))?;
    }
    writeln!(w)?;
    let slice = field.time_slice(i);
    for (j1, row) in slice.outer_iter().enumerate() {
        write!(w, "{}", g.y(j1))?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
