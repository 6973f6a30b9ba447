//! Run provenance written next to every output file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub toolkit_version: &'static str,
    /// Only set in sidecar files, so that outputs embedding a manifest stay
    /// byte-identical across reruns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, parameters: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            seed,
            parameters,
            toolkit_version: env!("CARGO_PKG_VERSION"),
            timestamp: None,
        }
    }

    /// Reads a file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        String::from_utf8(bytes).with_context(|| format!("{} is not valid UTF-8", path.display()))
    }

    pub fn stamped(&self) -> Self {
        let mut m = self.clone();
        m.timestamp = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
        m
    }
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes `contents` to `path` and its stamped manifest to the sidecar.
pub fn write_with_manifest(path: &Path, contents: &str, manifest: &RunManifest) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&manifest.stamped())? + "\n";
    fs::write(&side, json).with_context(|| format!("cannot write {}", side.display()))?;
    Ok(())
}
