//! `fingerprint.json`: what produced an output directory.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_json;
use crate::taxonomy_data::TAXONOMY_VERSION;

pub const FILE_NAME: &str = "fingerprint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub command: String,
    /// Configuration after merging the config file and command-line flags.
    pub resolved_config: serde_json::Value,
    pub seed: Option<u64>,
    pub taxonomy_version: String,
    pub code_version: String,
    /// SHA-256 of the compact JSON form of `resolved_config` (keys sorted).
    pub config_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Fingerprint {
    pub fn new<T: Serialize>(command: &str, resolved: &T, seed: Option<u64>) -> Result<Self> {
        let value = serde_json::to_value(resolved).map_err(|e| Error::Invalid(e.to_string()))?;
        let compact = serde_json::to_string(&value).map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(Fingerprint {
            command: command.into(),
            config_sha256: sha256_hex(compact.as_bytes()),
            resolved_config: value,
            seed,
            taxonomy_version: TAXONOMY_VERSION.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(FILE_NAME), self)
    }
}
