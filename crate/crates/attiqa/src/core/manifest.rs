use crate::core::PerAttribute;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {name} line {line}: parse failure: {msg}")]
    Parse {
        name: String,
        line: usize,
        msg: String,
    },
    #[error("manifest {name} line {line}: partial attribute scores")]
    PartialAttributes { name: String, line: usize },
    #[error("manifest {name}: duplicate image_id {image_id}")]
    DuplicateImageId { name: String, image_id: String },
    #[error("manifest {name} line {line}: non-finite mos")]
    NonFiniteMos { name: String, line: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

/// One dataset entry: an image path plus whatever supervision the dataset
/// provides (MOS, per-attribute human scores, an official split tag).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image_id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub mos: Option<f64>,
    #[serde(default)]
    pub attributes: Option<PerAttribute<f64>>,
    #[serde(default)]
    pub split: Option<SplitTag>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Builds a manifest, enforcing image_id uniqueness and finite MOS.
    pub fn new(
        name: impl Into<String>,
        records: Vec<ManifestRecord>,
    ) -> Result<Self, ManifestError> {
        let name = name.into();
        let mut seen = HashSet::new();
        for (i, rec) in records.iter().enumerate() {
            if !seen.insert(rec.image_id.as_str()) {
                return Err(ManifestError::DuplicateImageId {
                    name,
                    image_id: rec.image_id.clone(),
                });
            }
            if let Some(mos) = rec.mos {
                if !mos.is_finite() {
                    return Err(ManifestError::NonFiniteMos { name, line: i + 1 });
                }
            }
        }
        Ok(DatasetManifest { name, records })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_split_tags(&self) -> bool {
        self.records.iter().any(|r| r.split.is_some())
    }

    pub fn has_mos(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.mos.is_some())
    }

    pub fn has_attribute_scores(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.attributes.is_some())
    }
}

/// Loads a JSON Lines manifest; the manifest name is the file stem.
///
/// Each line is one record:
/// `{"image_id": str, "path": str, "mos": number|null,
///   "attributes": {"sharpness": .., ..}|null, "split": "train"|"test"|null}`.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".to_owned());
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| {
            if attributes_partial(line) {
                ManifestError::PartialAttributes {
                    name: name.clone(),
                    line: i + 1,
                }
            } else {
                ManifestError::Parse {
                    name: name.clone(),
                    line: i + 1,
                    msg: e.to_string(),
                }
            }
        })?;
        if let Some(mos) = rec.mos {
            if !mos.is_finite() {
                return Err(ManifestError::NonFiniteMos { name, line: i + 1 });
            }
        }
        records.push(rec);
    }
    DatasetManifest::new(name, records)
}

fn attributes_partial(line: &str) -> bool {
    let Ok(value) = serde_json::from_str::<serde_json::Value>(line) else {
        return false;
    };
    match value.get("attributes") {
        Some(serde_json::Value::Object(map)) => {
            let canonical: HashSet<&str> = crate::core::Attribute::ALL
                .iter()
                .map(|a| a.name())
                .collect();
            let keys: HashSet<&str> = map.keys().map(|k| k.as_str()).collect();
            keys != canonical
        }
        _ => false,
    }
}

/// Writes the manifest in the JSON Lines format `load_manifest` reads.
pub fn save_manifest(
    manifest: &DatasetManifest,
    path: impl AsRef<Path>,
) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for rec in &manifest.records {
        serde_json::to_writer(&mut out, rec).expect("manifest record serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&out).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}
