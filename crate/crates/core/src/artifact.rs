//! Field grids as plain-text CSV artifacts.
//!
//! Layout: `# key=value` metadata lines, then the header
//! `x1,x2,f,d1,d2,d11,d12,d22,weight` and one row per node in row-major
//! order. `x1, x2` are the torus coordinates, or `(θ, φ)` on the sphere.
//! Floats are printed in their shortest round-trip form, so reading an
//! artifact back reproduces the grid exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::sampler::{FieldGrid, GridMeta, WaveSpec};

pub const FIELD_COLUMNS: &str = "x1,x2,f,d1,d2,d11,d12,d22,weight";

/// Renders `grid` as an artifact.
pub fn field_to_csv(grid: &FieldGrid) -> String {
    let mut s = String::with_capacity(grid.len() * 160);
    let m = &grid.meta;
    let _ = writeln!(s, "# manifold={}", grid.manifold());
    let _ = writeln!(s, "# n={}", grid.spec.n);
    let _ = writeln!(s, "# seed={}", grid.spec.seed);
    let _ = writeln!(s, "# rows={}", grid.rows);
    let _ = writeln!(s, "# cols={}", grid.cols);
    let _ = writeln!(s, "# imag_residue={:?}", m.imag_residue);
    let _ = writeln!(s, "# excluded_rows={}", m.excluded_rows);
    let _ = writeln!(s, "# weight_renormalization={:?}", m.weight_renormalization);
    if let Some([north, south]) = m.poles {
        let _ = writeln!(s, "# poles={north:?};{south:?}");
    }
    s.push_str(FIELD_COLUMNS);
    s.push('\n');
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let i = grid.index(r, c);
            let _ = writeln!(
                s,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                grid.axis0[r],
                grid.axis1[c],
                grid.f[i],
                grid.d1[i],
                grid.d2[i],
                grid.d11[i],
                grid.d12[i],
                grid.d22[i],
                grid.weights[i]
            );
        }
    }
    s
}

pub fn write_field(grid: &FieldGrid, path: &Path) -> Result<()> {
    fs::write(path, field_to_csv(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: &Path) -> Result<FieldGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    field_from_csv(&text)
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedRecord(msg.into())
}

/// Parses an artifact produced by [`field_to_csv`].
pub fn field_from_csv(text: &str) -> Result<FieldGrid> {
    let mut meta: Vec<(&str, &str)> = Vec::new();
    let mut lines = text.lines();
    let mut header = None;
    for line in lines.by_ref() {
        if let Some(kv) = line.strip_prefix('#') {
            let (k, v) = kv
                .trim()
                .split_once('=')
                .ok_or_else(|| malformed(format!("metadata line '{line}'")))?;
            meta.push((k.trim(), v.trim()));
        } else if !line.trim().is_empty() {
            header = Some(line);
            break;
        }
    }
    if header.map(str::trim) != Some(FIELD_COLUMNS) {
        return Err(malformed(format!("expected header '{FIELD_COLUMNS}'")));
    }
    let get = |key: &str| -> Result<&str> {
        meta.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| malformed(format!("missing metadata '{key}'")))
    };
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| malformed(format!("metadata '{key}' has bad value '{v}'")))
    }
    let manifold: Manifold = num("manifold", get("manifold")?)?;
    let n: u64 = num("n", get("n")?)?;
    let seed: u64 = num("seed", get("seed")?)?;
    let rows: usize = num("rows", get("rows")?)?;
    let cols: usize = num("cols", get("cols")?)?;
    let spec = WaveSpec::new(manifold, n, seed).map_err(|e| malformed(e.to_string()))?;
    let poles = match meta.iter().find(|(k, _)| *k == "poles") {
        Some((_, v)) => {
            let (a, b) = v
                .split_once(';')
                .ok_or_else(|| malformed("poles must be 'north;south'"))?;
            Some([num("poles", a)?, num("poles", b)?])
        }
        None => None,
    };
    let grid_meta = GridMeta {
        imag_residue: num("imag_residue", get("imag_residue")?)?,
        excluded_rows: num("excluded_rows", get("excluded_rows")?)?,
        weight_renormalization: num("weight_renormalization", get("weight_renormalization")?)?,
        poles,
    };
    let len = rows * cols;
    let mut cols_data: [Vec<f64>; 9] = std::array::from_fn(|_| Vec::with_capacity(len));
    for (k, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let mut count = 0;
        for (j, field) in line.split(',').enumerate() {
            if j >= 9 {
                return Err(malformed(format!("data row {} has more than 9 columns", k + 1)));
            }
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| malformed(format!("data row {} column {}: '{field}'", k + 1, j + 1)))?;
            cols_data[j].push(v);
            count += 1;
        }
        if count != 9 {
            return Err(malformed(format!("data row {} has {count} columns", k + 1)));
        }
    }
    if cols_data[0].len() != len || len == 0 {
        return Err(malformed(format!(
            "expected {len} data rows, found {}",
            cols_data[0].len()
        )));
    }
    let [x1, x2, f, d1, d2, d11, d12, d22, weights] = cols_data;
    let axis0: Vec<f64> = (0..rows).map(|r| x1[r * cols]).collect();
    let axis1: Vec<f64> = x2[..cols].to_vec();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if x1[i] != axis0[r] || x2[i] != axis1[c] {
                return Err(malformed(format!("node {i} is off the tensor grid")));
            }
        }
    }
    Ok(FieldGrid {
        spec,
        rows,
        cols,
        axis0,
        axis1,
        f,
        d1,
        d2,
        d11,
        d12,
        d22,
        weights,
        meta: grid_meta,
    })
}
