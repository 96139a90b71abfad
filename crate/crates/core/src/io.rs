//! Run artifacts: output directories, JSON files and the run manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Creates `dir` (and parents) and checks that it accepts files.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-probe");
    File::create(&probe).map_err(|e| Error::config(format!("output directory {} not writable: {e}", dir.display())))?;
    fs::remove_file(probe)?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Everything needed to reproduce a run. Holds no timestamps or host data, so
/// reruns with the same inputs produce the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mode: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_sha256: String,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    /// Deterministic artifacts and their SHA-256.
    pub files: BTreeMap<String, String>,
    /// Artifacts with wall-clock content, listed but not hashed.
    pub diagnostics: Vec<String>,
}

impl Manifest {
    pub fn new<C: Serialize>(mode: &str, config: &C, master_seed: u64) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.to_string(),
            config_sha256: sha256_hex(&serde_json::to_vec(config)?),
            master_seed,
            seeds: Vec::new(),
            files: BTreeMap::new(),
            diagnostics: Vec::new(),
        })
    }

    /// Hashes the files under `root`, keyed by relative path.
    pub fn record(&mut self, root: &Path, files: &[PathBuf]) -> Result<()> {
        for f in files {
            let rel = f.strip_prefix(root).unwrap_or(f).to_string_lossy().replace('\\', "/");
            self.files.insert(rel, sha256_hex(&fs::read(f)?));
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        fs::write(&f, b"abc").unwrap();
        let mut m = Manifest::new("episode", &serde_json::json!({"x": 1}), 7).unwrap();
        m.record(dir.path(), &[f]).unwrap();
        assert_eq!(
            m.files["a.txt"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let p = m.write(dir.path()).unwrap();
        let a = fs::read(&p).unwrap();
        m.write(dir.path()).unwrap();
        assert_eq!(a, fs::read(&p).unwrap());
    }
}
