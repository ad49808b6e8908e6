use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    /// SHA-256 over the canonical config JSON followed by every input file.
    pub input_hash: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<PathBuf>,
}

/// Length-prefixed so that moving bytes between config and inputs
/// changes the hash.
pub fn content_hash(config: &serde_json::Value, inputs: &[Vec<u8>]) -> String {
    let mut h = Sha256::new();
    let canonical = serde_json::to_vec(config).expect("JSON values serialize");
    for chunk in std::iter::once(&canonical).chain(inputs) {
        h.update((chunk.len() as u64).to_le_bytes());
        h.update(chunk);
    }
    format!("{:x}", h.finalize())
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
