//! Run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory, `/`-separated, or a full path
    /// for files written elsewhere.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Constants derived from one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub n: usize,
    pub seed: Option<u64>,
    pub kappa_n: f64,
    pub c_n: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapStatus {
    pub population_cap: usize,
    pub runs: usize,
    pub exploded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub derived: Vec<DerivedConstants>,
    pub cap: Option<CapStatus>,
    pub warnings: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputEntry>,
}

pub fn now_unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files under a root and records each one for the manifest.
#[derive(Debug)]
pub struct OutputSet {
    root: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputSet {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(rel);
        self.record(&path, rel.to_string(), bytes)?;
        Ok(path)
    }

    /// Writes a file that lives outside the root; it is listed by its full path.
    pub fn write_outside(&mut self, path: &Path, bytes: &[u8]) -> Result<PathBuf> {
        self.record(path, path.display().to_string(), bytes)?;
        Ok(path.to_path_buf())
    }

    fn record(&mut self, path: &Path, label: String, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.entries.push(OutputEntry {
            path: label,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Inventory sorted by path.
    pub fn finish(mut self) -> Vec<OutputEntry> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        self.entries
    }
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
