//! Field and trace serialization.
//!
//! Binary field dump format `FBGRID1`: magic bytes `FBGRID1\0`, u8 dim,
//! u64 cell counts per axis, f64 h, f64 origin per axis, then row-major
//! little-endian f64 node values. Round-trips are bitwise exact.

use super::{EnergyBreakdown, Grid, ScalarFieldGrid};
use crate::error::Error;
use crate::Result;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"FBGRID1\0";

pub fn write_field(field: &ScalarFieldGrid, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(64 + field.values.len() * 8);
    out.extend_from_slice(MAGIC);
    let g = &field.grid;
    out.push(g.dim as u8);
    for d in 0..g.dim {
        out.extend_from_slice(&(g.dims[d] as u64).to_le_bytes());
    }
    out.extend_from_slice(&g.h.to_le_bytes());
    for d in 0..g.dim {
        out.extend_from_slice(&g.origin[d].to_le_bytes());
    }
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarFieldGrid> {
    let mut file = std::fs::File::open(path)?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(Error::BadFieldFile("truncated".into()));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != MAGIC {
        return Err(Error::BadFieldFile("bad magic".into()));
    }
    let dim = take(&mut pos, 1)?[0] as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::BadFieldFile(format!("bad dim {dim}")));
    }
    let mut dims = [1usize; 3];
    for d in 0..dim {
        dims[d] = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    }
    let h = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let mut origin = [0.0; 3];
    for d in 0..dim {
        origin[d] = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    }
    let grid = Grid::new(dim, h, origin, &dims[..dim]);
    let count = grid.node_count();
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
    }
    if pos != buf.len() {
        return Err(Error::BadFieldFile("trailing bytes".into()));
    }
    Ok(ScalarFieldGrid { grid, values })
}

pub fn write_energy_csv(breakdown: &EnergyBreakdown, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "dirichlet,potential,volume_term,total,vol_q,delta")?;
    writeln!(
        f,
        "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
        breakdown.dirichlet,
        breakdown.potential,
        breakdown.volume_term,
        breakdown.total,
        breakdown.vol_q_raw,
        breakdown
            .smoothed_delta
            .map(|d| format!("{d:.17e}"))
            .unwrap_or_else(|| "sharp".into())
    )?;
    Ok(())
}

/// Generic numeric trace writer: one header row, then rows of f64 columns.
pub fn write_trace_csv(header: &[&str], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}
