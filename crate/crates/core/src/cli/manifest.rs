//! Run manifests: every command writes a JSON snapshot of its full
//! configuration, seeds, and the digests of the files it read and wrote,
//! next to its primary output. A run is reproducible from its manifest.

use crate::channelgen::container::file_digest;
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let sha256 = file_digest(path)?;
        let bytes = std::fs::metadata(path)
            .map(|m| m.len())
            .unwrap_or_default();
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256,
            bytes,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Full configuration snapshot, including every seed.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Write the manifest as `<primary>.run.json`.
    pub fn save_next_to(&self, primary: &Path) -> Result<PathBuf> {
        let mut name = primary.file_name().unwrap_or_default().to_os_string();
        name.push(".run.json");
        let path = primary.with_file_name(name);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::Error::config(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, json)
            .map_err(|e| crate::error::Error::io(path.display().to_string(), e))?;
        Ok(path)
    }
}
