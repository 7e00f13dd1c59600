//! Binary field snapshots.
//!
//! Layout: magic `NFSIM1`, `dim` (u8), `n` (u32 LE), `h` (f64 LE), then
//! `n^dim` f64 LE values per component, components concatenated. The
//! component count is implied by the payload length.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};

const MAGIC: &[u8; 6] = b"NFSIM1";

fn write_components(path: &Path, grid: Grid, components: &[&ScalarField]) -> Result<()> {
    let mut buf = Vec::with_capacity(19 + components.len() * grid.node_count() * 8);
    buf.extend_from_slice(MAGIC);
    buf.push(grid.dim() as u8);
    buf.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.h().to_le_bytes());
    for c in components {
        assert_eq!(c.grid(), grid, "snapshot components must share one grid");
        for v in c.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn write_scalar(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    write_components(path.as_ref(), f.grid(), &[f])
}

pub fn write_vector(path: impl AsRef<Path>, f: &VectorField) -> Result<()> {
    let comps: Vec<&ScalarField> = f.components().iter().collect();
    write_components(path.as_ref(), f.grid(), &comps)
}

fn read_components(path: &Path) -> Result<(Grid, Vec<Vec<f64>>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 19 || &bytes[0..6] != MAGIC {
        return Err(Error::MalformedSnapshot("bad header".into()));
    }
    let dim = bytes[6] as usize;
    if dim != 1 && dim != 2 {
        return Err(Error::MalformedSnapshot(format!(
            "dim {dim} not in {{1,2}}"
        )));
    }
    let n = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    if n < 3 {
        return Err(Error::MalformedSnapshot(format!("n = {n} too small")));
    }
    let h = f64::from_le_bytes(bytes[11..19].try_into().unwrap());
    let grid = Grid::new(dim, n);
    if (h - grid.h()).abs() > 1e-12 * grid.h() {
        return Err(Error::MalformedSnapshot(format!(
            "spacing {h} inconsistent with n = {n}"
        )));
    }
    let payload = &bytes[19..];
    let per = grid.node_count() * 8;
    if per == 0 || payload.len() % per != 0 || payload.is_empty() {
        return Err(Error::MalformedSnapshot("truncated payload".into()));
    }
    let mut comps = Vec::new();
    for chunk in payload.chunks_exact(per) {
        let vals: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(Error::MalformedSnapshot("non-finite entry".into()));
        }
        comps.push(vals);
    }
    Ok((grid, comps))
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarField> {
    let (grid, mut comps) = read_components(path.as_ref())?;
    if comps.len() != 1 {
        return Err(Error::MalformedSnapshot(format!(
            "expected 1 component, found {}",
            comps.len()
        )));
    }
    Ok(ScalarField::from_values(grid, comps.remove(0)))
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<VectorField> {
    let (grid, comps) = read_components(path.as_ref())?;
    if comps.len() != grid.dim() {
        return Err(Error::MalformedSnapshot(format!(
            "expected {} components, found {}",
            grid.dim(),
            comps.len()
        )));
    }
    Ok(VectorField::from_components(
        comps
            .into_iter()
            .map(|v| ScalarField::from_values(grid, v))
            .collect(),
    ))
}
