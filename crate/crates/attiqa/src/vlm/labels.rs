//! Persistent pseudo-label store: JSON Lines, one record per image, keyed by
//! (provider_id, prompt_set_id).

use crate::core::{Attribute, DatasetManifest, ImageRaster, PerAttribute};
use crate::vlm::{
    score_from_embeddings, AttributeScoreRecord, EmbeddingCache, EmbeddingProvider, PromptPairSet,
    VlmError,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreLine {
    image_id: String,
    sharpness: f64,
    contrast: f64,
    brightness: f64,
    colorfulness: f64,
    noisiness: f64,
    provider: String,
    prompt_set: String,
}

impl From<&AttributeScoreRecord> for StoreLine {
    fn from(r: &AttributeScoreRecord) -> Self {
        StoreLine {
            image_id: r.image_id.clone(),
            sharpness: r.scores[Attribute::Sharpness],
            contrast: r.scores[Attribute::Contrast],
            brightness: r.scores[Attribute::Brightness],
            colorfulness: r.scores[Attribute::Colorfulness],
            noisiness: r.scores[Attribute::Noisiness],
            provider: r.provider_id.clone(),
            prompt_set: r.prompt_set_id.clone(),
        }
    }
}

/// In-memory view of a label store file.
#[derive(Clone, Debug, Default)]
pub struct LabelStore {
    records: BTreeMap<String, AttributeScoreRecord>,
}

impl LabelStore {
    pub fn get(&self, image_id: &str) -> Option<&AttributeScoreRecord> {
        self.records.get(image_id)
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.records.contains_key(image_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &AttributeScoreRecord> {
        self.records.values()
    }

    pub fn insert(&mut self, record: AttributeScoreRecord) {
        self.records.insert(record.image_id.clone(), record);
    }
}

/// Reads a JSON Lines label store.
pub fn load_label_store(path: impl AsRef<Path>) -> Result<LabelStore, VlmError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| VlmError::Store {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let mut store = LabelStore::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: StoreLine = serde_json::from_str(line).map_err(|e| VlmError::Store {
            path: path.display().to_string(),
            msg: format!("line {}: {e}", i + 1),
        })?;
        let scores = PerAttribute::new([
            parsed.sharpness,
            parsed.contrast,
            parsed.brightness,
            parsed.colorfulness,
            parsed.noisiness,
        ]);
        store.insert(AttributeScoreRecord::new(
            parsed.image_id,
            scores,
            parsed.provider,
            parsed.prompt_set,
        )?);
    }
    Ok(store)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenerateSummary {
    pub written: usize,
    pub skipped_existing: usize,
    pub unreadable: usize,
}

/// Scores every manifest image with the five prompt pairs and appends the
/// records to `out`. Resumable: image_ids already present are skipped, so a
/// rerun on a complete store writes nothing. Text embeddings are computed
/// once per prompt; image embeddings fan out across a thread pool but are
/// written in manifest order by a single writer.
pub fn generate_labels(
    manifest: &DatasetManifest,
    pairs: &PromptPairSet,
    provider: &dyn EmbeddingProvider,
    out: impl AsRef<Path>,
    cache: Option<&EmbeddingCache>,
) -> Result<GenerateSummary, VlmError> {
    let out = out.as_ref();
    let mut existing = if out.exists() {
        load_label_store(out)?
    } else {
        LabelStore::default()
    };
    for record in existing.records() {
        if record.provider_id != provider.provider_id() || record.prompt_set_id != pairs.set_id {
            return Err(VlmError::Store {
                path: out.display().to_string(),
                msg: format!(
                    "store holds labels for ({}, {}), refusing to mix with ({}, {})",
                    record.provider_id,
                    record.prompt_set_id,
                    provider.provider_id(),
                    pairs.set_id
                ),
            });
        }
    }

    // One text embedding per prompt, reused across all images.
    let mut text_embeddings: PerAttribute<(Vec<f64>, Vec<f64>)> =
        PerAttribute::from_fn(|_| (Vec::new(), Vec::new()));
    for attribute in Attribute::ALL {
        let pair = &pairs.pairs[attribute];
        text_embeddings[attribute] = (
            provider.embed_text(&pair.positive)?,
            provider.embed_text(&pair.negative)?,
        );
    }

    let mut summary = GenerateSummary::default();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| VlmError::Store {
            path: out.display().to_string(),
            msg: e.to_string(),
        })?;

    let pending: Vec<_> = manifest
        .records()
        .iter()
        .filter(|r| {
            if existing.contains(&r.image_id) {
                summary.skipped_existing += 1;
                false
            } else {
                true
            }
        })
        .collect();

    for chunk in pending.chunks(64) {
        let results: Vec<Result<Option<AttributeScoreRecord>, VlmError>> = chunk
            .par_iter()
            .map(|record| {
                let img = match ImageRaster::from_png(&record.path, &record.image_id) {
                    Ok(img) => img,
                    Err(e) => {
                        eprintln!("warning: skipping {}: {e}", record.image_id);
                        return Ok(None);
                    }
                };
                let embedding = embed_cached(provider, &img, cache)?;
                let scores = PerAttribute::from_fn(|a| {
                    let (pos, neg) = &text_embeddings[a];
                    score_from_embeddings(&embedding, pos, neg).unwrap_or(f64::NAN)
                });
                if scores.values().iter().any(|v| !v.is_finite()) {
                    return Err(VlmError::NonFinite);
                }
                Ok(Some(AttributeScoreRecord::new(
                    record.image_id.clone(),
                    scores,
                    provider.provider_id(),
                    &pairs.set_id,
                )?))
            })
            .collect();

        for result in results {
            match result? {
                Some(record) => {
                    let line = serde_json::to_string(&StoreLine::from(&record))
                        .expect("store line serializes");
                    writeln!(file, "{line}").map_err(|e| VlmError::Store {
                        path: out.display().to_string(),
                        msg: e.to_string(),
                    })?;
                    existing.insert(record);
                    summary.written += 1;
                }
                None => summary.unreadable += 1,
            }
        }
        file.flush().map_err(|e| VlmError::Store {
            path: out.display().to_string(),
            msg: e.to_string(),
        })?;
    }
    Ok(summary)
}

fn embed_cached(
    provider: &dyn EmbeddingProvider,
    img: &ImageRaster,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<f64>, VlmError> {
    match cache {
        Some(cache) => cache.image_embedding(provider, img),
        None => provider.embed_image(img),
    }
}
