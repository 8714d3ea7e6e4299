use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

/// Provenance record written next to every run's outputs. It holds no
/// timestamps, thread counts or absolute paths, so reruns reproduce it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub subcommand: String,
    pub model: Option<String>,
    pub seed: u64,
    pub split_year: i32,
    pub config_hash: String,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    /// Digest of the config hash and all input digests.
    pub run_hash: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::User(format!("cannot read {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

impl Manifest {
    pub fn new(subcommand: &str, model: Option<String>, seed: u64, split_year: i32, config_hash: String) -> Self {
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            tool: "wildfire".to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            model,
            seed,
            split_year,
            config_hash,
            inputs: Vec::new(),
            outputs: Vec::new(),
            run_hash: String::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.inputs.push(InputDigest { name, sha256: sha256_file(path)? });
        Ok(())
    }

    pub fn finish(mut self) -> Self {
        let mut h = Sha256::new();
        h.update(self.config_hash.as_bytes());
        for i in &self.inputs {
            h.update(b"\n");
            h.update(i.name.as_bytes());
            h.update(b"=");
            h.update(i.sha256.as_bytes());
        }
        self.run_hash = format!("{:x}", h.finalize());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
