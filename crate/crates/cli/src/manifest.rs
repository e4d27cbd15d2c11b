use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// Written as `manifest.json` next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Command line as invoked.
    pub argv: Vec<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, Artifact>,
    pub outputs: BTreeMap<String, Artifact>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: &impl Serialize) -> Result<Self, CliError> {
        Ok(RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config).map_err(|e| CliError::runtime(e.to_string()))?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(name.to_string(), artifact(path)?);
        Ok(())
    }

    pub fn output(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        self.outputs.insert(name.to_string(), artifact(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self).map_err(|e| CliError::runtime(e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn artifact(path: &Path) -> Result<Artifact, CliError> {
    Ok(Artifact {
        path: path.to_path_buf(),
        sha256: sha256_file(path)?,
    })
}
