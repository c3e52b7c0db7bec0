//! Checkpoint directory format: a human-readable `manifest.json` beside a
//! versioned, checksummed `weights.bin` (magic + version + count + f64 LE).

use crate::core::Attribute;
use crate::model::{Layout, Model, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

const WEIGHTS_MAGIC: &[u8; 4] = b"ATQW";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint manifest: {0}")]
    Manifest(String),
    #[error("weights blob malformed: {0}")]
    Malformed(String),
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u32),
    #[error("weights checksum mismatch (blob corrupted)")]
    ChecksumMismatch,
    #[error("manifest attribute order differs from the canonical ordering")]
    AttributeOrderMismatch,
    #[error("weights length {got} does not match the model layout ({expected})")]
    LengthMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Run provenance stored beside the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub provider_id: String,
    pub prompt_set_id: String,
    pub epoch: usize,
    pub seed: u64,
    /// Name of the manifest the run trained on.
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub config_hash: String,
    #[serde(default)]
    pub metrics: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    format_version: u32,
    model: ModelSpec,
    has_regressor: bool,
    attribute_order: Vec<String>,
    weights_checksum: String,
    #[serde(flatten)]
    meta: CheckpointMeta,
}

/// Writes `manifest.json` + `weights.bin` into `dir` (created if missing).
/// Both files land via write-temp-then-rename.
pub fn save_checkpoint(
    model: &Model,
    meta: &CheckpointMeta,
    dir: impl AsRef<Path>,
) -> Result<(), CheckpointError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| CheckpointError::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let mut blob = Vec::with_capacity(16 + model.params().len() * 8);
    blob.extend_from_slice(WEIGHTS_MAGIC);
    blob.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    blob.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for &v in model.params() {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    let checksum = format!("{:x}", Sha256::digest(&blob));

    let manifest = ManifestFile {
        format_version: FORMAT_VERSION,
        model: model.spec().clone(),
        has_regressor: model.has_regressor(),
        attribute_order: Attribute::ALL.iter().map(|a| a.name().to_owned()).collect(),
        weights_checksum: checksum,
        meta: meta.clone(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");

    atomic_write(dir, "weights.bin", &blob)?;
    atomic_write(dir, "manifest.json", manifest_json.as_bytes())?;
    Ok(())
}

fn atomic_write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CheckpointError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let target = dir.join(name);
    let io = |source| CheckpointError::Io {
        path: target.display().to_string(),
        source,
    };
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, &target).map_err(io)
}

/// Loads a checkpoint directory; forward outputs of the returned model are
/// bit-identical to the saved one.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(Model, CheckpointMeta), CheckpointError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let manifest_text =
        std::fs::read_to_string(&manifest_path).map_err(|source| CheckpointError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;
    let manifest: ManifestFile = serde_json::from_str(&manifest_text)
        .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch(manifest.format_version));
    }
    let canonical: Vec<String> = Attribute::ALL.iter().map(|a| a.name().to_owned()).collect();
    if manifest.attribute_order != canonical {
        return Err(CheckpointError::AttributeOrderMismatch);
    }

    let weights_path = dir.join("weights.bin");
    let blob = std::fs::read(&weights_path).map_err(|source| CheckpointError::Io {
        path: weights_path.display().to_string(),
        source,
    })?;
    if format!("{:x}", Sha256::digest(&blob)) != manifest.weights_checksum {
        return Err(CheckpointError::ChecksumMismatch);
    }
    if blob.len() < 16 || &blob[..4] != WEIGHTS_MAGIC {
        return Err(CheckpointError::Malformed("bad magic".to_owned()));
    }
    let version = u32::from_le_bytes(blob[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch(version));
    }
    let count = u64::from_le_bytes(blob[8..16].try_into().expect("8 bytes")) as usize;
    let body = &blob[16..];
    if body.len() != count * 8 {
        return Err(CheckpointError::Malformed(format!(
            "expected {count} params, got {} bytes",
            body.len()
        )));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let layout = Layout::build_for(&manifest.model, manifest.has_regressor);
    if params.len() != layout.len {
        return Err(CheckpointError::LengthMismatch {
            got: params.len(),
            expected: layout.len,
        });
    }
    Ok((
        Model::from_parts(manifest.model, layout, params),
        manifest.meta,
    ))
}

impl Layout {
    pub(crate) fn build_for(spec: &ModelSpec, with_regressor: bool) -> Layout {
        Layout::build(spec, with_regressor)
    }
}
