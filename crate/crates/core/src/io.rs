//! DFSL grid dumps and CSV tables.
//!
//! A DFSL file is the magic `DFSL`, then little-endian `u32` version, `u32`
//! dimension, `u32` points per axis and `f64` box length, followed by the
//! samples of every component in turn, each row-major. The component count
//! follows from the payload length.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{LabError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::GridSpec;
use crate::mc::EndpointSample;
use crate::pde::Trajectory;

const MAGIC: &[u8; 4] = b"DFSL";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

/// Decoded contents of a DFSL file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub grid: GridSpec,
    pub components: Vec<Vec<f64>>,
}

impl GridDump {
    pub fn into_scalar(self) -> Result<ScalarField> {
        match <[Vec<f64>; 1]>::try_from(self.components) {
            Ok([values]) => ScalarField::new(self.grid, values),
            Err(c) => Err(LabError::Format(format!("expected 1 component, found {}", c.len()))),
        }
    }

    /// Vector field as stored; callers certify or project it before use.
    pub fn into_vector(self) -> Result<VectorField> {
        if self.components.len() != self.grid.dim() {
            return Err(LabError::Format(format!(
                "expected {} components, found {}",
                self.grid.dim(),
                self.components.len()
            )));
        }
        VectorField::new(self.grid, self.components)
    }
}

pub fn encode(grid: &GridSpec, components: &[&[f64]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len() * components.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.points() as u32).to_le_bytes());
    out.extend_from_slice(&grid.box_length().to_le_bytes());
    for c in components {
        for v in c.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<GridDump> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(LabError::Format("missing DFSL header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(LabError::Format(format!("unsupported DFSL version {version}")));
    }
    let dim = word(8) as usize;
    let points = word(12) as usize;
    let box_length = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let grid = GridSpec::new(dim, points, box_length).map_err(|e| LabError::Format(e.to_string()))?;
    let payload = &bytes[HEADER_LEN..];
    let per_component = 8 * grid.len();
    if payload.is_empty() || payload.len() % per_component != 0 {
        return Err(LabError::Format(format!(
            "payload of {} bytes is not a whole number of {}-sample components",
            payload.len(),
            grid.len()
        )));
    }
    let components = payload
        .chunks_exact(per_component)
        .map(|chunk| chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
        .collect();
    Ok(GridDump { grid, components })
}

pub fn read_dump(path: &Path) -> Result<GridDump> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    fs::write(path, encode(f.grid(), &[f.values()]))?;
    Ok(())
}

pub fn write_vector(path: &Path, b: &VectorField) -> Result<()> {
    let comps: Vec<&[f64]> = b.components().iter().map(|c| c.as_slice()).collect();
    fs::write(path, encode(b.grid(), &comps))?;
    Ok(())
}

/// Writes a CSV table whose first line is a `# key=value` comment carrying
/// the provenance hash.
pub fn write_csv(path: &Path, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# config_sha256={hash}")?;
    {
        let mut w = csv::Writer::from_writer(&mut file);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    file.flush()?;
    Ok(())
}

/// Reads a table written by [`write_csv`], returning the hash, the header
/// and the rows.
pub fn read_csv(path: &Path) -> Result<(String, Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let hash = first
        .strip_prefix("# config_sha256=")
        .ok_or_else(|| LabError::Format(format!("{} lacks a hash comment", path.display())))?
        .trim()
        .to_string();
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((hash, header, rows))
}

/// Snapshots as `snapshot_NNNNN.dfsl` plus `manifest.csv`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, hash: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::with_capacity(traj.snapshots.len());
    for ((snap, &t), &step) in traj.snapshots.iter().zip(&traj.times).zip(&traj.steps) {
        write_scalar(&dir.join(format!("snapshot_{step:05}.dfsl")), snap)?;
        rows.push(vec![
            step.to_string(),
            format!("{t:.10e}"),
            format!("{:.16e}", snap.mass()),
            format!("{:.16e}", snap.l2_norm()),
            format!("{:.16e}", snap.min()),
            format!("{:.16e}", snap.max()),
        ]);
    }
    write_csv(&dir.join("manifest.csv"), hash, &["index", "time", "mass", "l2_norm", "min", "max"], &rows)
}

/// One row per path: id, wrapped endpoint coordinates, exit flag.
pub fn write_endpoints(path: &Path, s: &EndpointSample, hash: &str) -> Result<()> {
    let axes = ["x0", "x1", "x2"];
    let mut header = vec!["path_id"];
    header.extend_from_slice(&axes[..s.dim]);
    header.push("exited");
    let rows: Vec<Vec<String>> = s
        .endpoints
        .iter()
        .zip(&s.exited)
        .enumerate()
        .map(|(i, (e, ex))| {
            let mut row = vec![i.to_string()];
            row.extend(e[..s.dim].iter().map(|v| format!("{v:.16e}")));
            row.push(u8::from(*ex).to_string());
            row
        })
        .collect();
    write_csv(path, hash, &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_scalar_and_vector() {
        let g = GridSpec::new(3, 8, 2.5).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] - 2.0 * x[2]);
        let bytes = encode(&g, &[f.values()]);
        assert_eq!(&bytes[..4], b"DFSL");
        assert_eq!(bytes.len(), HEADER_LEN + 8 * g.len());
        assert_eq!(decode(&bytes).unwrap().into_scalar().unwrap(), f);

        let b = crate::field::cellular_vortex(&GridSpec::new(2, 16, 4.0).unwrap(), 1.0, 1).unwrap();
        let comps: Vec<&[f64]> = b.components().iter().map(|c| c.as_slice()).collect();
        let back = decode(&encode(b.grid(), &comps)).unwrap().into_vector().unwrap();
        assert_eq!(back.components(), b.components());
    }

    #[test]
    fn rejects_corrupt_input() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let mut bytes = encode(&g, &[&vec![0.0; g.len()]]);
        assert!(decode(&bytes[..10]).is_err());
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(LabError::Format(_))));
        let mut wrong = encode(&g, &[&vec![0.0; g.len()]]);
        wrong[0] = b'X';
        assert!(decode(&wrong).is_err());
        let two = decode(&encode(&g, &[&vec![0.0; g.len()], &vec![1.0; g.len()]])).unwrap();
        assert!(two.clone().into_scalar().is_err());
        assert!(two.into_vector().is_ok());
    }

    #[test]
    fn csv_with_hash_roundtrip() {
        let dir = std::env::temp_dir().join(format!("dfsl-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let rows = vec![vec!["1".to_string(), "a,b".to_string()]];
        write_csv(&path, "abc123", &["n", "label"], &rows).unwrap();
        let (hash, header, back) = read_csv(&path).unwrap();
        assert_eq!(hash, "abc123");
        assert_eq!(header, vec!["n", "label"]);
        assert_eq!(back, rows);
        fs::remove_dir_all(&dir).unwrap();
    }
}
