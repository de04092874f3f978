//! File formats: the binary field container and CSV/JSON helpers.
//!
//! Field container layout (little-endian):
//!
//! ```text
//! u64 nx | u64 ny | f64 L | u_x[ny*nx] | u_y[ny*nx] | xi[ny*nx]
//! ```
//!
//! Arrays are row-major in `y` (`index = j*nx + i`), `f64` each. A JSON
//! sidecar with the generating parameters is written next to the container
//! (same path, `.json` extension).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::energy::EnergyBreakdown;
use crate::error::{Error, Result};
use crate::grid::{DeformationField, Grid};

pub fn save_field(path: &Path, field: &DeformationField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(field.grid.nx as u64).to_le_bytes())?;
    w.write_all(&(field.grid.ny as u64).to_le_bytes())?;
    w.write_all(&field.grid.l.to_le_bytes())?;
    for arr in [&field.u_x, &field.u_y, &field.xi] {
        for v in arr.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<DeformationField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let nx = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let ny = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let l = f64::from_le_bytes(b8);
    let grid = Grid::new(nx, ny, l)?;
    let n = grid.n_nodes();
    let mut read_array = |n: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            out.push(f64::from_le_bytes(b));
        }
        Ok(out)
    };
    let u_x = read_array(n)?;
    let u_y = read_array(n)?;
    let xi = read_array(n)?;
    DeformationField::from_parts(grid, u_x, u_y, xi)
}

/// Writes the JSON sidecar next to a field container.
pub fn save_sidecar<T: Serialize>(field_path: &Path, params: &T) -> Result<()> {
    let path = field_path.with_extension("json");
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, params)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// CSV of breakdown records, one labeled row per evaluation.
pub fn write_breakdown_csv<W: Write>(
    mut out: W,
    rows: &[(String, EnergyBreakdown)],
) -> Result<()> {
    writeln!(out, "label,{}", EnergyBreakdown::CSV_HEADER)?;
    for (label, b) in rows {
        writeln!(out, "{},{}", label, b.csv_row())?;
    }
    Ok(())
}

/// Two-column whitespace/comma file, as consumed by the slope fitter and
/// written by `--emit-plot-data`.
pub fn read_xy(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
        let x = parts.next();
        let y = parts.next();
        match (x, y) {
            (Some(xs), Some(ys)) => {
                let x: f64 = xs.parse().map_err(|_| {
                    Error::DegenerateFit(format!("line {}: bad number {xs:?}", lineno + 1))
                })?;
                let y: f64 = ys.parse().map_err(|_| {
                    Error::DegenerateFit(format!("line {}: bad number {ys:?}", lineno + 1))
                })?;
                out.push((x, y));
            }
            _ => {
                return Err(Error::DegenerateFit(format!("line {}: expected two columns", lineno + 1)))
            }
        }
    }
    Ok(out)
}

pub fn write_xy(path: &Path, rows: &[(f64, f64)], comment: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    if !comment.is_empty() {
        writeln!(f, "# {comment}")?;
    }
    for (x, y) in rows {
        writeln!(f, "{x} {y}")?;
    }
    f.flush()?;
    Ok(())
}
