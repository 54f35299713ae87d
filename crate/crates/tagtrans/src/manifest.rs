//! Run manifests: a deterministic record of what a command read, which
//! configuration it resolved, and the digests of everything it wrote.
//!
//! Manifests deliberately carry no timestamps or host details, so two runs
//! with identical inputs and seed produce byte-identical manifests — which
//! is how reproducibility is checked.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{atomic_write, read_to_string, sha256_hex};

/// File name a manifest is saved under, next to the outputs it describes.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Role -> path, as given on the command line.
    pub inputs: BTreeMap<String, String>,
    /// Resolved configuration values, after defaults and elicitation.
    pub config: BTreeMap<String, String>,
    /// Command-specific counters (items read, tokens split, ...).
    pub stats: BTreeMap<String, String>,
    /// Output file name -> SHA-256 of its exact bytes.
    pub outputs: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            tool: "tagtrans".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            inputs: BTreeMap::new(),
            config: BTreeMap::new(),
            stats: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn record_input(&mut self, role: &str, path: impl AsRef<Path>) {
        self.inputs
            .insert(role.to_string(), path.as_ref().display().to_string());
    }

    pub fn set_config(&mut self, key: &str, value: impl Display) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn set_stat(&mut self, key: &str, value: impl Display) {
        self.stats.insert(key.to_string(), value.to_string());
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Record an output file by name and the exact bytes written to it.
    pub fn record_output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    /// Write the manifest into `dir` under [`MANIFEST_FILE`].
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        atomic_write(&path, self.to_json().as_bytes())?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        RunManifest::parse(&text, &path.display().to_string())
    }
}
