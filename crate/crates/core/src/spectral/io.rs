//! `.f3d` snapshots: one JSON header line, then little-endian f64 samples.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::field::ScalarField3;
use super::grid::Grid3;
use crate::error::{Error, Result};

pub const LAYOUT: &str = "real-space, component-major, x-fastest";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F3dHeader {
    pub grid_n: usize,
    pub component_count: usize,
    pub time: f64,
    pub layout: String,
}

pub fn write_f3d(path: &Path, components: &[&ScalarField3], time: f64) -> Result<()> {
    let grid = components
        .first()
        .ok_or_else(|| Error::InvalidArgument("no components to write".into()))?
        .grid;
    let header = F3dHeader {
        grid_n: grid.n(),
        component_count: components.len(),
        time,
        layout: LAYOUT.to_string(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for c in components {
        if c.grid != grid {
            return Err(Error::GridMismatch(grid.n(), c.grid.n()));
        }
        for x in &c.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_f3d(path: &Path) -> Result<(F3dHeader, Vec<ScalarField3>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: F3dHeader = serde_json::from_str(line.trim_end())?;
    if header.layout != LAYOUT {
        return Err(Error::InvalidArgument(format!("unsupported layout {:?}", header.layout)));
    }
    let grid = Grid3::new(header.grid_n)?;
    let mut out = Vec::with_capacity(header.component_count);
    let mut buf = [0u8; 8];
    for _ in 0..header.component_count {
        let mut data = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        out.push(ScalarField3::from_data(grid, data)?);
    }
    Ok((header, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let g = Grid3::new(8).unwrap();
        let a = ScalarField3::from_fn(g, |x| x[0] + 2.0 * x[1] - x[2]);
        let b = ScalarField3::constant(g, -0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.f3d");
        write_f3d(&path, &[&a, &b], 0.25).unwrap();
        let (h, c) = read_f3d(&path).unwrap();
        assert_eq!(h.grid_n, 8);
        assert_eq!(h.component_count, 2);
        assert_eq!(h.time, 0.25);
        assert_eq!(c[0], a);
        assert_eq!(c[1], b);
    }
}
