//! Output files, their hashes, and the provenance stamped on each run.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub config_hash: String,
    pub seed: u64,
    /// SHA-256 of the input file, when there is one.
    pub input_sha256: Option<String>,
}

impl Provenance {
    pub fn new(cfg: &RunConfig, input_sha256: Option<String>) -> Self {
        Self {
            tool: "currstat".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: currstat_core::VERSION.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed(),
            input_sha256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub provenance: Provenance,
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
}

/// Wall-clock facts live here so every other file is reproducible byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub provenance: Provenance,
    pub started_unix_seconds: u64,
    pub elapsed_seconds: f64,
    pub threads: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub struct Artifacts {
    dir: PathBuf,
    provenance: Provenance,
    config: serde_json::Value,
    files: Vec<FileEntry>,
    started: SystemTime,
    clock: Instant,
}

impl Artifacts {
    pub fn create(dir: &Path, cfg: &RunConfig, provenance: Provenance) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance,
            config: serde_json::to_value(cfg.echo())?,
            files: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn config(&self) -> &serde_json::Value {
        &self.config
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write_bytes(name, &text)
    }

    /// Writes a CSV produced into a buffer by `fill`.
    pub fn write_csv(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), CliError>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    /// Writes `manifest.json` and `run_metadata.json`.
    pub fn finish(mut self) -> Result<Vec<FileEntry>> {
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest {
            provenance: self.provenance.clone(),
            config: self.config.clone(),
            files: self.files.clone(),
        };
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        let meta = RunMetadata {
            provenance: self.provenance.clone(),
            started_unix_seconds: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            elapsed_seconds: self.clock.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        };
        let mut text = serde_json::to_vec_pretty(&meta)?;
        text.push(b'\n');
        std::fs::write(self.dir.join("run_metadata.json"), text)?;
        Ok(self.files)
    }
}
