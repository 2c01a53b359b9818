//! Binary field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `TNSE` |
//! | 4     | version, `u32` (currently 1) |
//! | 4     | `M`, `u32` |
//! | 8     | ball radius `n`, `f64` |
//! | 8     | box length `L`, `f64` |
//! | 48·M³ | coefficients: three components in turn, each `M³` pairs `(re, im)` of `f64` in FFT order |
//!
//! FFT order is the flat index `(i₀·M + i₁)·M + i₂` with `iₐ` the standard
//! DFT frequency slot. Coefficients carry the `1/M³` forward normalization.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::{Grid, C64};

pub const MAGIC: &[u8; 4] = b"TNSE";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub grid: Arc<Grid>,
    pub field: SpectralField,
}

pub fn encode(field: &SpectralField) -> Vec<u8> {
    let g = field.grid();
    let full = field.to_full();
    let mut out = Vec::with_capacity(HEADER_LEN + 48 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.m() as u32).to_le_bytes());
    out.extend_from_slice(&field.cutoff().to_le_bytes());
    out.extend_from_slice(&g.length().to_le_bytes());
    for comp in &full {
        for z in comp {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

/// Decode a snapshot. A grid is built from the header unless `grid` is
/// given, in which case its size and length must match.
pub fn decode(bytes: &[u8], grid: Option<&Arc<Grid>>) -> Result<Snapshot> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Snapshot(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let m = u32_at(bytes, 8) as usize;
    let n = f64_at(bytes, 12);
    let l = f64_at(bytes, 20);
    let expected = m
        .checked_pow(3)
        .and_then(|c| c.checked_mul(48))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Snapshot(format!("grid size {m} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::Snapshot(format!(
            "expected {expected} bytes for M = {m}, found {}",
            bytes.len()
        )));
    }
    if !(n.is_finite() || n == f64::INFINITY) || n < 0.0 {
        return Err(Error::Snapshot(format!("bad ball radius {n}")));
    }
    let grid = match grid {
        Some(g) => {
            if g.m() != m || g.length() != l {
                return Err(Error::Snapshot(format!(
                    "snapshot grid M = {m}, L = {l} does not match M = {}, L = {}",
                    g.m(),
                    g.length()
                )));
            }
            g.clone()
        }
        None => Grid::new(m, l).map_err(|e| Error::Snapshot(e.to_string()))?,
    };
    let len = m * m * m;
    let mut full: [Vec<C64>; 3] = Default::default();
    for (c, comp) in full.iter_mut().enumerate() {
        let base = HEADER_LEN + 16 * len * c;
        *comp = (0..len)
            .map(|i| C64::new(f64_at(bytes, base + 16 * i), f64_at(bytes, base + 16 * i + 8)))
            .collect();
    }
    let field = SpectralField::from_full(&grid, &full, n);
    Ok(Snapshot { grid, field })
}

pub fn write(path: &Path, field: &SpectralField) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode(field))?;
    f.flush()?;
    Ok(())
}

pub fn read(path: &Path, grid: Option<&Arc<Grid>>) -> Result<Snapshot> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes, grid)
}
