//! Run manifests: every command that writes outputs drops a manifest next
//! to them recording the resolved configuration, input/output checksums,
//! seeds, and wall-clock bounds.
//!
//! Manifests carry timestamps, so they are metadata rather than artifacts:
//! reproducibility comparisons go over the outputs themselves, which are
//! byte-identical across reruns with fixed seeds and offline providers.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    /// Input path -> SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output path -> SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub started_at_unix_ms: u128,
    pub finished_at_unix_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {} for checksum", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            started_at_unix_ms: now_ms(),
            finished_at_unix_ms: 0,
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn record_seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    /// Stamp the finish time and write `<primary_output>.manifest.json`.
    pub fn finish(mut self, primary_output: &Path) -> Result<()> {
        self.finished_at_unix_ms = now_ms();
        let path = manifest_path(primary_output);
        let mut body = serde_json::to_string_pretty(&self).context("serializing manifest")?;
        body.push('\n');
        std::fs::write(&path, body)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}

pub fn manifest_path(primary_output: &Path) -> std::path::PathBuf {
    let name = primary_output
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".to_string());
    primary_output.with_file_name(format!("{name}.manifest.json"))
}
