//! Self-describing checkpoint directories.
//!
//! A checkpoint holds `meta.json` (configuration, taxonomy version, class
//! list, backbone identity) and `state.json` (probe parameters and LoRA
//! factors). Directories are written under a temporary name and renamed
//! into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voxlect_core::probe::{DialectModel, Encoder, ProbeConfig, ProbeState};
use voxlect_core::taxonomy::{LanguageGroup, Taxonomy};

use crate::error::{io_at, require, Error, Result};
use crate::fingerprint::sha256_hex;
use crate::frontend::{mock_backbone, LogMelFrontend, MockBackboneConfig};
use crate::io::{read_json, temp_sibling, write_json};

pub const FORMAT_VERSION: u32 = 1;
const META: &str = "meta.json";
const STATE: &str = "state.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub taxonomy_version: String,
    pub language_group: LanguageGroup,
    pub class_names: Vec<String>,
    pub backbone_id: String,
    pub backbone: MockBackboneConfig,
    /// SHA-256 over the frozen backbone weights.
    pub base_weight_sha256: String,
    pub probe: ProbeConfig,
    pub epoch: usize,
    pub val_macro_f1: Option<f64>,
    pub config_sha256: Option<String>,
}

pub type Model = DialectModel<LogMelFrontend>;

/// Hash of every frozen encoder tensor, little-endian `f64` bytes in a fixed order.
pub fn base_weight_hash(encoder: &Encoder) -> String {
    let mut bytes = Vec::new();
    for t in encoder.base_parameters() {
        for v in t {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}

pub fn save(dir: &Path, meta: &CheckpointMeta, state: &ProbeState) -> Result<()> {
    let tmp = temp_sibling(dir);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io_at(&tmp))?;
    }
    write_json(&tmp.join(META), meta)?;
    write_json(&tmp.join(STATE), state)?;
    if dir.exists() {
        let old = dir.with_file_name(format!(
            ".{}.old-{}",
            dir.file_name().unwrap_or_default().to_string_lossy(),
            std::process::id()
        ));
        fs::rename(dir, &old).map_err(io_at(dir))?;
        fs::rename(&tmp, dir).map_err(io_at(dir))?;
        fs::remove_dir_all(&old).map_err(io_at(&old))?;
    } else {
        fs::rename(&tmp, dir).map_err(io_at(dir))?;
    }
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    require(dir, "checkpoint")?;
    read_json(&dir.join(META))
}

/// Rebuilds the model, refusing checkpoints from another taxonomy version
/// or with a class list that disagrees with `taxonomy`.
pub fn load(dir: &Path, taxonomy: &Taxonomy) -> Result<(CheckpointMeta, Model)> {
    let meta = read_meta(dir)?;
    let fail = |message: String| Error::Checkpoint {
        path: PathBuf::from(dir),
        message,
    };
    if meta.format_version != FORMAT_VERSION {
        return Err(fail(format!("unsupported format version {}", meta.format_version)));
    }
    if meta.taxonomy_version != taxonomy.version {
        return Err(Error::TaxonomyVersion {
            found: meta.taxonomy_version,
            expected: taxonomy.version.clone(),
        });
    }
    if meta.class_names != taxonomy.class_names(meta.language_group)? {
        return Err(fail(format!("class list differs from the {} taxonomy", meta.language_group)));
    }
    let backbone = mock_backbone(&meta.backbone)?;
    if backbone.id != meta.backbone_id {
        return Err(fail(format!("backbone {} cannot be rebuilt", meta.backbone_id)));
    }
    if base_weight_hash(&backbone.encoder) != meta.base_weight_sha256 {
        return Err(fail("frozen backbone weights do not match the recorded hash".into()));
    }
    let state: ProbeState = read_json(&dir.join(STATE))?;
    let mut model = DialectModel::new(meta.probe.clone(), backbone)?;
    model.load_state(&state)?;
    Ok((meta, model))
}
