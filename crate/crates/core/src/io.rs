//! Field files: a JSON header next to a binary (little-endian f64) or CSV
//! payload.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Domain, Field, Grid};

pub const FORMAT: &str = "multiwell-field";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Bin,
    Csv,
}

impl Payload {
    fn ext(self) -> &'static str {
        match self {
            Payload::Bin => "bin",
            Payload::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub k: usize,
    pub epsilon: f64,
    pub bc: BoundaryCondition,
    pub domain: Domain,
    pub payload: Payload,
    /// File name of the payload, relative to the header.
    pub data: String,
    pub n_values: usize,
}

/// Writes `<stem>.json` and `<stem>.bin|csv`; returns the header path.
pub fn write_field(f: &Field, stem: &Path, payload: Payload) -> Result<PathBuf> {
    let data_path = stem.with_extension(payload.ext());
    let header_path = stem.with_extension("json");
    let g = &*f.grid;
    let header = FieldHeader {
        format: FORMAT.into(),
        version: VERSION,
        origin: g.origin,
        h: g.h,
        nx: g.nx,
        ny: g.ny,
        k: f.k,
        epsilon: f.epsilon,
        bc: f.bc,
        domain: g.domain,
        payload,
        data: data_path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
        n_values: f.values.len(),
    };
    let mut w = BufWriter::new(fs::File::create(&data_path)?);
    match payload {
        Payload::Bin => {
            for v in &f.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Payload::Csv => {
            let cols: Vec<String> = (1..=f.k).map(|c| format!("u{c}")).collect();
            writeln!(w, "x,y,{}", cols.join(","))?;
            for idx in 0..g.n_nodes() {
                let p = g.pos(idx);
                let vals: Vec<String> = f.at(idx).iter().map(|v| v.to_string()).collect();
                writeln!(w, "{},{},{}", p[0], p[1], vals.join(","))?;
            }
        }
    }
    w.flush()?;
    fs::write(&header_path, serde_json::to_string_pretty(&header)? + "\n")?;
    Ok(header_path)
}

pub fn read_field(header_path: &Path) -> Result<Field> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
    if header.format != FORMAT {
        return Err(Error::Format(format!("unexpected format '{}'", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    let grid = Grid::for_domain(&header.domain, header.h)?;
    if grid.nx != header.nx || grid.ny != header.ny {
        return Err(Error::Format(format!(
            "header grid {}x{} does not match domain ({}x{})",
            header.nx, header.ny, grid.nx, grid.ny
        )));
    }
    let expected = grid.n_nodes() * header.k;
    if header.n_values != expected {
        return Err(Error::Format(format!("header declares {} values, grid needs {expected}", header.n_values)));
    }
    let data_path = header_path.parent().unwrap_or(Path::new(".")).join(&header.data);
    let values = match header.payload {
        Payload::Bin => {
            let bytes = fs::read(&data_path)?;
            if bytes.len() != expected * 8 {
                return Err(Error::Format(format!("payload has {} bytes, expected {}", bytes.len(), expected * 8)));
            }
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect()
        }
        Payload::Csv => {
            let r = BufReader::new(fs::File::open(&data_path)?);
            let mut values = Vec::with_capacity(expected);
            for (line_no, line) in r.lines().enumerate().skip(1) {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 2 + header.k {
                    return Err(Error::Format(format!("line {}: expected {} columns", line_no + 1, 2 + header.k)));
                }
                for c in &cols[2..] {
                    values.push(
                        c.trim().parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", line_no + 1)))?,
                    );
                }
            }
            if values.len() != expected {
                return Err(Error::Format(format!("payload has {} values, expected {expected}", values.len())));
            }
            values
        }
    };
    Ok(Field { grid: Arc::new(grid), k: header.k, values, epsilon: header.epsilon, bc: header.bc })
}

/// Writes a scalar node array (e.g. a density) as a one-component field.
pub fn write_scalar(grid: &Arc<Grid>, data: &[f64], epsilon: f64, stem: &Path, payload: Payload) -> Result<PathBuf> {
    let f = Field { grid: grid.clone(), k: 1, values: data.to_vec(), epsilon, bc: BoundaryCondition::Dirichlet };
    write_field(&f, stem, payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Field {
        let g = Arc::new(Grid::disk([0.1, 0.2], 0.5, 0.05).unwrap());
        Field::from_fn(g, 2, 0.07, BoundaryCondition::Dirichlet, |p, v| {
            v[0] = p[0].sin() / 3.0;
            v[1] = 1e-17 + p[1] * p[0];
        })
    }

    #[test]
    fn round_trip_both_payloads() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample();
        for payload in [Payload::Bin, Payload::Csv] {
            let stem = dir.path().join(format!("f_{}", payload.ext()));
            let hp = write_field(&f, &stem, payload).unwrap();
            let g = read_field(&hp).unwrap();
            assert_eq!(g.values, f.values);
            assert_eq!(g.grid.mask(), f.grid.mask());
            assert_eq!(g.epsilon, f.epsilon);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample();
        let stem = dir.path().join("f");
        let hp = write_field(&f, &stem, Payload::Bin).unwrap();
        let bytes = fs::read(stem.with_extension("bin")).unwrap();
        fs::write(stem.with_extension("bin"), &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_field(&hp), Err(Error::Format(_))));
        let mut h: serde_json::Value = serde_json::from_str(&fs::read_to_string(&hp).unwrap()).unwrap();
        h["n_values"] = serde_json::json!(5);
        fs::write(&hp, h.to_string()).unwrap();
        assert!(matches!(read_field(&hp), Err(Error::Format(_))));
    }
}
