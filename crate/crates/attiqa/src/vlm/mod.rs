//! Embedding-provider interface, antonym-pair scoring, pseudo-label
//! generation, and the deterministic analytic mock provider.

mod cache;
mod labels;
mod mock;

pub use cache::EmbeddingCache;
pub use labels::{generate_labels, load_label_store, GenerateSummary, LabelStore};
pub use mock::{analytic_stats, zscored_stats, AnalyticMockProvider, Polarity};

use crate::core::{Attribute, ImageRaster, PerAttribute};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VlmError {
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("non-finite value")]
    NonFinite,
    #[error("provider {id} failed: {msg}")]
    Provider { id: String, msg: String },
    #[error("prompt pair: {0}")]
    BadPromptPair(String),
    #[error("attribute score {value} for {attribute} outside (0,1)")]
    ScoreOutOfRange { attribute: Attribute, value: f64 },
    #[error("label store {path}: {msg}")]
    Store { path: String, msg: String },
    #[error("unknown provider id '{0}'")]
    UnknownProvider(String),
}

/// A joint image/text embedding model. Implementations must be deterministic
/// per input and return unit-norm vectors of a fixed dimension; they must
/// tolerate concurrent embed calls.
pub trait EmbeddingProvider: Sync {
    fn provider_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_image(&self, img: &ImageRaster) -> Result<Vec<f64>, VlmError>;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>, VlmError>;
}

/// Looks up a provider by id string. `analytic-mock` is in-repo;
/// `external-vlm:<tag>` is an adapter slot with no default registration.
pub fn provider_by_id(id: &str) -> Result<Box<dyn EmbeddingProvider>, VlmError> {
    if id == "analytic-mock" {
        return Ok(Box::new(AnalyticMockProvider::new()));
    }
    if let Some(tag) = id.strip_prefix("external-vlm:") {
        return Err(VlmError::Provider {
            id: id.to_owned(),
            msg: format!("no external adapter registered for '{tag}'"),
        });
    }
    Err(VlmError::UnknownProvider(id.to_owned()))
}

/// An antonym text pair for one attribute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub attribute: Attribute,
    pub positive: String,
    pub negative: String,
}

impl PromptPair {
    pub fn new(
        attribute: Attribute,
        positive: impl Into<String>,
        negative: impl Into<String>,
    ) -> Result<Self, VlmError> {
        let positive = positive.into();
        let negative = negative.into();
        if positive.trim().is_empty() || negative.trim().is_empty() {
            return Err(VlmError::BadPromptPair("empty prompt text".to_owned()));
        }
        if positive == negative {
            return Err(VlmError::BadPromptPair(format!(
                "positive and negative are identical: '{positive}'"
            )));
        }
        Ok(PromptPair {
            attribute,
            positive,
            negative,
        })
    }
}

/// Five prompt pairs under one set id; the unit label generation consumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptPairSet {
    pub set_id: String,
    pub pairs: PerAttribute<PromptPair>,
}

impl PromptPairSet {
    pub fn new(set_id: impl Into<String>, pairs: PerAttribute<PromptPair>) -> Self {
        PromptPairSet {
            set_id: set_id.into(),
            pairs,
        }
    }
}

/// Per-image pseudo-label: five attribute scores strictly inside (0,1).
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeScoreRecord {
    pub image_id: String,
    pub scores: PerAttribute<f64>,
    pub provider_id: String,
    pub prompt_set_id: String,
}

impl AttributeScoreRecord {
    pub fn new(
        image_id: impl Into<String>,
        scores: PerAttribute<f64>,
        provider_id: impl Into<String>,
        prompt_set_id: impl Into<String>,
    ) -> Result<Self, VlmError> {
        for (attribute, &value) in scores.iter() {
            if !value.is_finite() || value <= 0.0 || value >= 1.0 {
                return Err(VlmError::ScoreOutOfRange { attribute, value });
            }
        }
        Ok(AttributeScoreRecord {
            image_id: image_id.into(),
            scores,
            provider_id: provider_id.into(),
            prompt_set_id: prompt_set_id.into(),
        })
    }
}

/// Cosine similarity u.v / (|u||v|).
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, VlmError> {
    if u.len() != v.len() {
        return Err(VlmError::LengthMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(VlmError::ZeroNorm);
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(VlmError::ZeroNorm);
    }
    let value = dot / (nu * nv).sqrt();
    if !value.is_finite() {
        return Err(VlmError::NonFinite);
    }
    Ok(value)
}

/// Softmax of the positive relatedness against the negative one:
/// e^{s_pos} / (e^{s_pos} + e^{s_neg}) = logistic(s_pos - s_neg).
pub fn antonym_score(s_pos: f64, s_neg: f64) -> Result<f64, VlmError> {
    antonym_score_with_temperature(s_pos, s_neg, 1.0)
}

/// Temperature-scaled variant; the default temperature of 1.0 applies the
/// softmax to raw cosines.
pub fn antonym_score_with_temperature(
    s_pos: f64,
    s_neg: f64,
    temperature: f64,
) -> Result<f64, VlmError> {
    if !s_pos.is_finite() || !s_neg.is_finite() || temperature <= 0.0 || temperature.is_nan() {
        return Err(VlmError::NonFinite);
    }
    Ok(logistic((s_pos - s_neg) / temperature))
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Composes embedding, cosine relatedness, and the antonym softmax into one
/// attribute score for an image.
pub fn score_image(
    img: &ImageRaster,
    pair: &PromptPair,
    provider: &dyn EmbeddingProvider,
) -> Result<f64, VlmError> {
    let image_embedding = provider.embed_image(img)?;
    let pos = provider.embed_text(&pair.positive)?;
    let neg = provider.embed_text(&pair.negative)?;
    score_from_embeddings(&image_embedding, &pos, &neg)
}

/// The scoring tail for callers that cache embeddings.
pub fn score_from_embeddings(
    image_embedding: &[f64],
    positive: &[f64],
    negative: &[f64],
) -> Result<f64, VlmError> {
    let s_pos = cosine_similarity(image_embedding, positive)?;
    let s_neg = cosine_similarity(image_embedding, negative)?;
    antonym_score(s_pos, s_neg)
}
