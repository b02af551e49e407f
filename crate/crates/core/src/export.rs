//! CSV and JSON artifacts with sha256 manifests.
//!
//! Every data file is listed, with its checksum, in exactly one manifest.
//! Floats are written with `{:.17e}` in CSV so files round-trip bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::mesh::Mesh1D;
use crate::spectral::EigenSet;
use crate::variational::CriticalPoint;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Writes `data` to `dir/name` (creating parent directories) and returns its entry.
pub fn write_file(dir: &Path, name: &str, data: &[u8]) -> Result<FileEntry> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, data)?;
    Ok(FileEntry {
        path: name.to_string(),
        sha256: sha256_hex(data),
        bytes: data.len(),
    })
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<FileEntry> {
    write_file(dir, name, &json_bytes(value)?)
}

/// `k,lambda,residual`.
pub fn spectrum_csv(eig: &EigenSet) -> String {
    let mut s = String::from("k,lambda,residual\n");
    for (k, (l, r)) in eig.lambdas.iter().zip(&eig.residuals).enumerate() {
        let _ = writeln!(s, "{},{:.17e},{:.17e}", k + 1, l, r);
    }
    s
}

/// `header` is the name of the value column; node indices are one-based.
pub fn nodal_csv(mesh: &Mesh1D, values: &DVector<f64>, header: &str) -> String {
    let mut s = format!("node_index,x,{header}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{},{:.17e},{:.17e}", i + 1, mesh.node(i + 1), v);
    }
    s
}

/// Writes the spectrum table and one CSV per eigenvector under `prefix`.
pub fn write_spectrum(dir: &Path, prefix: &str, mesh: &Mesh1D, eig: &EigenSet) -> Result<Vec<FileEntry>> {
    let mut files = vec![write_file(dir, &format!("{prefix}spectrum.csv"), spectrum_csv(eig).as_bytes())?];
    for k in 1..=eig.len() {
        let csv = nodal_csv(mesh, &eig.vector(k), "value");
        files.push(write_file(dir, &format!("{prefix}eigenvector_{k:04}.csv"), csv.as_bytes())?);
    }
    Ok(files)
}

/// Per-solution manifest: the classification fields plus the run settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionManifest<C: Serialize> {
    pub file: FileEntry,
    #[serde(flatten)]
    pub point: CriticalPoint,
    pub seed: u64,
    pub cfg: C,
}

/// Writes `solutions/solution_XXX.csv` and its manifest; returns the manifest's entry.
pub fn write_solution<C: Serialize + Clone>(
    dir: &Path,
    index: usize,
    mesh: &Mesh1D,
    point: &CriticalPoint,
    seed: u64,
    cfg: &C,
) -> Result<FileEntry> {
    let csv = nodal_csv(mesh, &point.u, "u_value");
    let file = write_file(dir, &format!("solutions/solution_{index:03}.csv"), csv.as_bytes())?;
    let manifest = SolutionManifest {
        file,
        point: point.clone(),
        seed,
        cfg: cfg.clone(),
    };
    write_json(dir, &format!("solutions/solution_{index:03}.json"), &manifest)
}

/// Top-level manifest of a command run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub files: Vec<FileEntry>,
}

pub const RUN_MANIFEST: &str = "manifest.json";

pub fn write_run_manifest(dir: &Path, command: &str, files: Vec<FileEntry>) -> Result<PathBuf> {
    let manifest = RunManifest {
        command: command.to_string(),
        files,
    };
    write_json(dir, RUN_MANIFEST, &manifest)?;
    Ok(dir.join(RUN_MANIFEST))
}

/// Re-reads every file listed in `manifest` (relative to `dir`) and reports
/// the entries whose checksum no longer matches.
pub fn verify_manifest(dir: &Path, files: &[FileEntry]) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for f in files {
        let data = fs::read(dir.join(&f.path))?;
        if sha256_hex(&data) != f.sha256 || data.len() != f.bytes {
            bad.push(f.path.clone());
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn nodal_csv_round_trips_bits() {
        let mesh = Mesh1D::new(0.0, 1.0, 3, 0.5).unwrap();
        let v = DVector::from_vec(vec![0.1, -1.0 / 3.0, 2e-300]);
        let csv = nodal_csv(&mesh, &v, "value");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "node_index,x,value");
        for (i, line) in lines[1..].iter().enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[0], (i + 1).to_string());
            assert_eq!(cols[2].parse::<f64>().unwrap().to_bits(), v[i].to_bits());
        }
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let e = write_file(dir.path(), "a/b.csv", b"1,2\n").unwrap();
        assert!(verify_manifest(dir.path(), std::slice::from_ref(&e)).unwrap().is_empty());
        fs::write(dir.path().join("a/b.csv"), b"1,3\n").unwrap();
        assert_eq!(verify_manifest(dir.path(), &[e]).unwrap(), vec!["a/b.csv".to_string()]);
    }
}
