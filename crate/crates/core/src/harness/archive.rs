//! Model archives: a directory holding `manifest.json` and one VGT1 file per parameter.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::VgaModel;
use crate::datamodel::{load_tensor, save_tensor};
use crate::error::{Result, VgaError};

pub const ARCHIVE_FORMAT: &str = "vga-archive-1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Path relative to the archive directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    pub params: Vec<ManifestEntry>,
}

/// Writes the archive, creating `dir` if needed. Values are stored as `f32`.
pub fn save_model(model: &VgaModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let pdir = dir.join("params");
    fs::create_dir_all(&pdir).map_err(|e| VgaError::file(&pdir, e))?;
    let mut params = Vec::with_capacity(model.store.len());
    for (_, p) in model.store.iter() {
        let file = format!("params/{}.vgt", p.name());
        save_tensor(dir.join(&file), &p.value)?;
        params.push(ManifestEntry {
            name: p.name().to_string(),
            shape: p.value.shape().to_vec(),
            file,
        });
    }
    let manifest = Manifest {
        format: ARCHIVE_FORMAT.into(),
        config: model.config.clone(),
        params,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| VgaError::file(&path, e))
}

/// Rebuilds the model from its stored config and overwrites every parameter from the archive.
pub fn load_model(dir: impl AsRef<Path>) -> Result<VgaModel> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| VgaError::file(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != ARCHIVE_FORMAT {
        return Err(VgaError::Format(format!(
            "archive format '{}' is not {ARCHIVE_FORMAT}",
            manifest.format
        )));
    }
    let mut model = VgaModel::new(manifest.config)?;
    let expected: BTreeSet<&str> = model.store.names().collect();
    let found: BTreeSet<&str> = manifest.params.iter().map(|e| e.name.as_str()).collect();
    if expected != found {
        let missing: Vec<_> = expected.difference(&found).collect();
        let extra: Vec<_> = found.difference(&expected).collect();
        return Err(VgaError::Format(format!(
            "archive parameters do not match the model: missing {missing:?}, unexpected {extra:?}"
        )));
    }
    for e in &manifest.params {
        let t = load_tensor(dir.join(&e.file))?;
        let id = model.store.id(&e.name).expect("checked above");
        let p = model.store.get_mut(id);
        if t.shape() != p.value.shape() || t.shape() != e.shape.as_slice() {
            return Err(VgaError::Format(format!(
                "parameter '{}' stored with shape {:?}, model needs {:?}",
                e.name,
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t;
    }
    Ok(model)
}
