//! Binary checkpoint format for [`SpectralField`].
//!
//! Layout (all little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `NSCF` |
//! | 4     | format version (`u32`, currently 1) |
//! | 4     | dimension `d` (`u32`) |
//! | 4     | points per dimension `N` (`u32`) |
//! | 8     | box length `L` (`f64`) |
//! | 8     | time stamp (`f64`) |
//! | 16·d·N^d | coefficients |
//!
//! Coefficients are written lattice point by lattice point in row-major
//! order of the storage index (see [`Grid`]); each point holds `d` complex
//! numbers as `(re, im)` pairs of `f64`.

use super::{Grid, SpectralField};
use crate::error::{Error, Result};
use crate::geometry::Dim;
use num_complex::Complex64;
use std::io::{Read, Write};

pub const FIELD_MAGIC: [u8; 4] = *b"NSCF";
pub const FIELD_VERSION: u32 = 1;

pub fn write_field<W: Write>(mut w: W, field: &SpectralField) -> Result<()> {
    let g = field.grid;
    let mut buf = Vec::with_capacity(32 + 16 * g.dim.n() * g.len());
    buf.extend_from_slice(&FIELD_MAGIC);
    buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.dim.n() as u32).to_le_bytes());
    buf.extend_from_slice(&(g.n as u32).to_le_bytes());
    buf.extend_from_slice(&g.length.to_le_bytes());
    buf.extend_from_slice(&field.time.to_le_bytes());
    for f in 0..g.len() {
        for c in &field.comps {
            buf.extend_from_slice(&c[f].re.to_le_bytes());
            buf.extend_from_slice(&c[f].im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<SpectralField> {
    let mut head = [0u8; 32];
    r.read_exact(&mut head)?;
    if head[..4] != FIELD_MAGIC {
        return Err(Error::Format("not a field file (bad magic)".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
    let f64_at = |i: usize| f64::from_le_bytes(head[i..i + 8].try_into().unwrap());
    if u32_at(4) != FIELD_VERSION {
        return Err(Error::Format(format!("unsupported field format version {}", u32_at(4))));
    }
    let dim = Dim::try_from(u32_at(8) as u8).map_err(Error::Format)?;
    let grid = Grid::new(dim, u32_at(12) as usize, f64_at(16))?;
    let time = f64_at(24);
    let d = dim.n();
    let mut body = vec![0u8; 16 * d * grid.len()];
    r.read_exact(&mut body)?;
    let mut field = SpectralField::zeros(grid).with_time(time);
    for (p, chunk) in body.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        field.comps[p % d][p / d] = Complex64::new(re, im);
    }
    Ok(field)
}
