//! Candidate-adjective ingestion, prompt rendering, the two proxy tasks
//! (distortion-intensity ranking and human-perception alignment), and
//! joint prompt-pair selection per attribute.

use crate::core::{Attribute, DatasetManifest, ImageRaster, PerAttribute};
use crate::distortion::{
    apply_scheduled, default_schedule, distortions_for_attribute, DistortionKind,
};
use crate::metrics::{srocc, MetricError};
use crate::vlm::{score_from_embeddings, EmbeddingProvider, PromptPair, VlmError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Adjective lists shipped with the crate (50-per-polarity scale).
pub const DEFAULT_CANDIDATES_JSON: &str = include_str!("../data/default_candidates.json");

const PROXY_DISTORTION_SEED: u64 = 0xd157;

#[derive(Debug, Error)]
pub enum PromptSelError {
    #[error("empty adjective")]
    EmptyAdjective,
    #[error("failed to read candidates {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("candidate file: {0}")]
    Parse(String),
    #[error("candidate file missing attribute '{0}'")]
    MissingAttribute(String),
    #[error("{attribute} {side} list is empty")]
    EmptyList {
        attribute: Attribute,
        side: &'static str,
    },
    #[error("duplicate adjective '{adjective}' in {attribute} {side} list")]
    DuplicateAdjective {
        attribute: Attribute,
        side: &'static str,
        adjective: String,
    },
    #[error("mode {0:?} requires {1}")]
    MissingInput(SelectionMode, &'static str),
    #[error("no image corpus provided")]
    EmptyImages,
    #[error("manifest lacks attribute annotations")]
    MissingAnnotations,
    #[error("perception cap must be >= 2, got {0}")]
    CapTooSmall(usize),
    #[error("all candidate pairs are degenerate for {0}")]
    AllDegenerate(Attribute),
    #[error(transparent)]
    Vlm(#[from] VlmError),
    #[error("metric failure: {0}")]
    Metric(#[from] MetricError),
    #[error("distortion failure: {0}")]
    Distortion(#[from] crate::distortion::DistortionError),
    #[error("image load failure: {0}")]
    Raster(#[from] crate::core::RasterError),
}

/// Renders an adjective through the prompt template: capitalized adjective
/// followed by " image".
pub fn render_prompt(adjective: &str) -> Result<String, PromptSelError> {
    let adjective = adjective.trim();
    if adjective.is_empty() {
        return Err(PromptSelError::EmptyAdjective);
    }
    let mut chars = adjective.chars();
    let first = chars.next().expect("non-empty");
    let capitalized: String = first.to_uppercase().chain(chars).collect();
    Ok(format!("{capitalized} image"))
}

/// Positive/negative adjective candidates for one attribute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptCandidateSet {
    pub attribute: Attribute,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
    pub set_id: String,
}

#[derive(Clone, Serialize, Deserialize)]
struct CandidateLists {
    positive: Vec<String>,
    negative: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateFile {
    set_id: String,
    attributes: PerAttribute<CandidateLists>,
}

/// Parses and validates a candidate file: all five attributes present,
/// lists non-empty, adjectives unique within each list.
pub fn parse_candidates(text: &str) -> Result<PerAttribute<PromptCandidateSet>, PromptSelError> {
    // Check attribute coverage first for a precise error.
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| PromptSelError::Parse(e.to_string()))?;
    if let Some(attrs) = value.get("attributes").and_then(|v| v.as_object()) {
        for attribute in Attribute::ALL {
            if !attrs.contains_key(attribute.name()) {
                return Err(PromptSelError::MissingAttribute(
                    attribute.name().to_owned(),
                ));
            }
        }
    }
    let file: CandidateFile =
        serde_json::from_str(text).map_err(|e| PromptSelError::Parse(e.to_string()))?;
    let sets = PerAttribute::from_fn(|attribute| {
        let lists = &file.attributes[attribute];
        PromptCandidateSet {
            attribute,
            positives: lists.positive.clone(),
            negatives: lists.negative.clone(),
            set_id: file.set_id.clone(),
        }
    });
    for attribute in Attribute::ALL {
        let set = &sets[attribute];
        for (side, list) in [("positive", &set.positives), ("negative", &set.negatives)] {
            if list.is_empty() {
                return Err(PromptSelError::EmptyList { attribute, side });
            }
            let mut seen = std::collections::HashSet::new();
            for adjective in list {
                if !seen.insert(adjective.as_str()) {
                    return Err(PromptSelError::DuplicateAdjective {
                        attribute,
                        side,
                        adjective: adjective.clone(),
                    });
                }
            }
        }
    }
    Ok(sets)
}

pub fn load_candidates(
    path: impl AsRef<std::path::Path>,
) -> Result<PerAttribute<PromptCandidateSet>, PromptSelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PromptSelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_candidates(&text)
}

/// The candidate lists shipped with the crate.
pub fn default_candidates() -> PerAttribute<PromptCandidateSet> {
    parse_candidates(DEFAULT_CANDIDATES_JSON).expect("bundled candidate file is valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Distortion,
    Perception,
    Joint,
}

#[derive(Clone, Copy, Debug)]
pub struct SelectionOptions {
    pub mode: SelectionMode,
    /// Upper bound on annotated records scored by the perception proxy.
    pub perception_cap: usize,
    /// Seed for the deterministic subsample taken when the cap binds.
    pub subsample_seed: u64,
}

impl SelectionOptions {
    pub fn new(mode: SelectionMode) -> SelectionOptions {
        SelectionOptions {
            mode,
            perception_cap: 1000,
            subsample_seed: 0,
        }
    }
}

/// One evaluated pair in the ranked table. `None` marks a degenerate score
/// (constant score sequence), which ranks below every finite value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub positive: String,
    pub negative: String,
    pub task1_srocc: Option<f64>,
    pub task2_srocc: Option<f64>,
    pub joint: Option<f64>,
}

impl PairScore {
    /// The mode's objective for ranking and selection.
    pub fn objective(&self, mode: SelectionMode) -> Option<f64> {
        match mode {
            SelectionMode::Distortion => self.task1_srocc,
            SelectionMode::Perception => self.task2_srocc,
            SelectionMode::Joint => self.joint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSelection {
    pub attribute: Attribute,
    pub chosen: PromptPair,
    pub task1_srocc: Option<f64>,
    pub task2_srocc: Option<f64>,
    pub joint: Option<f64>,
    /// Every evaluated pair, ranked by the mode's objective (descending),
    /// ties broken lexicographically by (positive, negative).
    pub table: Vec<PairScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub mode: SelectionMode,
    pub provider_id: String,
    pub candidate_set_id: String,
    pub selections: PerAttribute<AttributeSelection>,
}

impl SelectionReport {
    /// The chosen pairs as a prompt-pair set usable by label generation.
    pub fn chosen_pairs(&self) -> crate::vlm::PromptPairSet {
        let set_id = format!("{}:{:?}", self.candidate_set_id, self.mode).to_lowercase();
        crate::vlm::PromptPairSet::new(
            set_id,
            PerAttribute::from_fn(|a| self.selections[a].chosen.clone()),
        )
    }
}

/// Distortion-intensity proxy: how well the pair's scores track the level
/// index of each mapped distortion, sign-corrected by the schedule's
/// expected direction, averaged over distortions then images.
/// Returns negative infinity if any score sequence is degenerate.
pub fn proxy_distortion(
    pair: &PromptPair,
    images: &[ImageRaster],
    provider: &dyn EmbeddingProvider,
) -> Result<f64, PromptSelError> {
    if images.is_empty() {
        return Err(PromptSelError::EmptyImages);
    }
    let pos = provider.embed_text(&pair.positive)?;
    let neg = provider.embed_text(&pair.negative)?;
    let table = DistortionEmbeddings::build(pair.attribute, images, provider)?;
    Ok(distortion_objective(&table, &pos, &neg).unwrap_or(f64::NEG_INFINITY))
}

/// Human-perception proxy: rank agreement between the pair's scores and the
/// human attribute annotations over at most `cap` records (deterministic
/// seeded subsample when capped). Returns negative infinity when degenerate.
pub fn proxy_perception(
    pair: &PromptPair,
    annotated: &DatasetManifest,
    provider: &dyn EmbeddingProvider,
    cap: usize,
    subsample_seed: u64,
) -> Result<f64, PromptSelError> {
    let table = PerceptionEmbeddings::build(annotated, provider, cap, subsample_seed)?;
    let pos = provider.embed_text(&pair.positive)?;
    let neg = provider.embed_text(&pair.negative)?;
    Ok(table
        .objective(pair.attribute, &pos, &neg)
        .unwrap_or(f64::NEG_INFINITY))
}

/// Evaluates every positive x negative rendered pair per attribute and picks
/// the argmax of the mode's objective. Deterministic: equal inputs produce
/// equal reports, including the ranked table.
pub fn select_prompts(
    candidates: &PerAttribute<PromptCandidateSet>,
    options: SelectionOptions,
    images: Option<&[ImageRaster]>,
    annotated: Option<&DatasetManifest>,
    provider: &dyn EmbeddingProvider,
) -> Result<SelectionReport, PromptSelError> {
    let needs_images = matches!(
        options.mode,
        SelectionMode::Distortion | SelectionMode::Joint
    );
    let needs_annotated = matches!(
        options.mode,
        SelectionMode::Perception | SelectionMode::Joint
    );
    let images = match (needs_images, images) {
        (true, None) => {
            return Err(PromptSelError::MissingInput(
                options.mode,
                "a distortion image corpus",
            ))
        }
        (_, imgs) => imgs,
    };
    if needs_images && images.is_some_and(|i| i.is_empty()) {
        return Err(PromptSelError::EmptyImages);
    }
    let annotated = match (needs_annotated, annotated) {
        (true, None) => {
            return Err(PromptSelError::MissingInput(
                options.mode,
                "an annotated manifest",
            ))
        }
        (_, m) => m,
    };

    let perception = if needs_annotated {
        Some(PerceptionEmbeddings::build(
            annotated.expect("checked above"),
            provider,
            options.perception_cap,
            options.subsample_seed,
        )?)
    } else {
        None
    };

    let mut selections: Vec<AttributeSelection> = Vec::with_capacity(5);
    for attribute in Attribute::ALL {
        let set = &candidates[attribute];

        // Each candidate text is embedded exactly once per attribute.
        let mut text_embeddings: HashMap<&str, Vec<f64>> = HashMap::new();
        for adjective in set.positives.iter().chain(&set.negatives) {
            if !text_embeddings.contains_key(adjective.as_str()) {
                let rendered = render_prompt(adjective)?;
                text_embeddings.insert(adjective.as_str(), provider.embed_text(&rendered)?);
            }
        }

        let distortion_table = if needs_images {
            Some(DistortionEmbeddings::build(
                attribute,
                images.expect("checked above"),
                provider,
            )?)
        } else {
            None
        };

        let mut table = Vec::with_capacity(set.positives.len() * set.negatives.len());
        for positive in &set.positives {
            let pos_emb = &text_embeddings[positive.as_str()];
            for negative in &set.negatives {
                let neg_emb = &text_embeddings[negative.as_str()];
                let task1 = distortion_table
                    .as_ref()
                    .and_then(|t| distortion_objective(t, pos_emb, neg_emb));
                let task2 = perception
                    .as_ref()
                    .and_then(|t| t.objective(attribute, pos_emb, neg_emb));
                let joint = match (task1, task2) {
                    (Some(a), Some(b)) => Some(a + b),
                    _ => None,
                };
                table.push(PairScore {
                    positive: render_prompt(positive)?,
                    negative: render_prompt(negative)?,
                    task1_srocc: task1,
                    task2_srocc: task2,
                    joint,
                });
            }
        }

        table.sort_by(|a, b| {
            let oa = a.objective(options.mode);
            let ob = b.objective(options.mode);
            match (oa, ob) {
                (Some(x), Some(y)) => y
                    .partial_cmp(&x)
                    .expect("finite objectives")
                    .then_with(|| a.positive.cmp(&b.positive))
                    .then_with(|| a.negative.cmp(&b.negative)),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => a
                    .positive
                    .cmp(&b.positive)
                    .then_with(|| a.negative.cmp(&b.negative)),
            }
        });

        let best = table
            .first()
            .filter(|p| p.objective(options.mode).is_some())
            .ok_or(PromptSelError::AllDegenerate(attribute))?;
        selections.push(AttributeSelection {
            attribute,
            chosen: PromptPair::new(attribute, best.positive.clone(), best.negative.clone())?,
            task1_srocc: best.task1_srocc,
            task2_srocc: best.task2_srocc,
            joint: best.joint,
            table,
        });
    }

    let mut drain = selections.into_iter();
    let selections = PerAttribute::new([
        drain.next().expect("five selections"),
        drain.next().expect("five selections"),
        drain.next().expect("five selections"),
        drain.next().expect("five selections"),
        drain.next().expect("five selections"),
    ]);
    Ok(SelectionReport {
        mode: options.mode,
        provider_id: provider.provider_id().to_owned(),
        candidate_set_id: candidates[Attribute::Sharpness].set_id.clone(),
        selections,
    })
}

/// Cached image embeddings over every (image, distortion, level) cell an
/// attribute's proxy needs.
struct DistortionEmbeddings {
    levels: Vec<f64>,
    /// cells[image][kind][level]
    cells: Vec<Vec<Vec<Vec<f64>>>>,
    directions: Vec<f64>,
}

impl DistortionEmbeddings {
    fn build(
        attribute: Attribute,
        images: &[ImageRaster],
        provider: &dyn EmbeddingProvider,
    ) -> Result<DistortionEmbeddings, PromptSelError> {
        let kinds: Vec<DistortionKind> = distortions_for_attribute(attribute);
        let schedules: Vec<_> = kinds.iter().map(|&k| default_schedule(k)).collect();
        let level_count = schedules[0].levels();
        let mut cells = Vec::with_capacity(images.len());
        for img in images {
            let mut per_kind = Vec::with_capacity(schedules.len());
            for schedule in &schedules {
                let mut per_level = Vec::with_capacity(level_count);
                for level in 0..schedule.levels() {
                    let distorted = apply_scheduled(img, schedule, level, PROXY_DISTORTION_SEED)?;
                    per_level.push(provider.embed_image(&distorted)?);
                }
                per_kind.push(per_level);
            }
            cells.push(per_kind);
        }
        Ok(DistortionEmbeddings {
            levels: (0..level_count).map(|l| l as f64).collect(),
            cells,
            directions: schedules
                .iter()
                .map(|s| f64::from(s.expected_direction))
                .collect(),
        })
    }
}

/// Mean over distortions then images of direction-corrected rank agreement
/// between pair scores and level indices. `None` when any cell is degenerate.
fn distortion_objective(table: &DistortionEmbeddings, pos: &[f64], neg: &[f64]) -> Option<f64> {
    let mut image_means = Vec::with_capacity(table.cells.len());
    for per_kind in &table.cells {
        let mut kind_sum = 0.0;
        for (k, per_level) in per_kind.iter().enumerate() {
            let scores: Vec<f64> = per_level
                .iter()
                .map(|e| score_from_embeddings(e, pos, neg).expect("unit embeddings"))
                .collect();
            match srocc(&scores, &table.levels) {
                Ok(r) => kind_sum += table.directions[k] * r.value,
                Err(MetricError::DegenerateInput) => return None,
                Err(_) => return None,
            }
        }
        image_means.push(kind_sum / per_kind.len() as f64);
    }
    Some(image_means.iter().sum::<f64>() / image_means.len() as f64)
}

struct PerceptionEmbeddings {
    embeddings: Vec<Vec<f64>>,
    human: PerAttribute<Vec<f64>>,
}

impl PerceptionEmbeddings {
    fn build(
        annotated: &DatasetManifest,
        provider: &dyn EmbeddingProvider,
        cap: usize,
        subsample_seed: u64,
    ) -> Result<PerceptionEmbeddings, PromptSelError> {
        if cap < 2 {
            return Err(PromptSelError::CapTooSmall(cap));
        }
        if annotated.is_empty() || !annotated.has_attribute_scores() {
            return Err(PromptSelError::MissingAnnotations);
        }
        let n = annotated.len();
        let selected: Vec<usize> = if n <= cap {
            (0..n).collect()
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            let mut state = crate::util::derive_seed(&[0x5ab5_u64, subsample_seed]);
            for i in (1..order.len()).rev() {
                let j = (crate::util::splitmix64(&mut state) % (i as u64 + 1)) as usize;
                order.swap(i, j);
            }
            let mut take: Vec<usize> = order.into_iter().take(cap).collect();
            take.sort_unstable();
            take
        };
        let mut embeddings = Vec::with_capacity(selected.len());
        let mut human: PerAttribute<Vec<f64>> = PerAttribute::from_fn(|_| Vec::new());
        for &idx in &selected {
            let record = &annotated.records()[idx];
            let img = ImageRaster::from_png(&record.path, &record.image_id)?;
            embeddings.push(provider.embed_image(&img)?);
            let scores = record.attributes.as_ref().expect("annotations checked");
            for attribute in Attribute::ALL {
                human[attribute].push(scores[attribute]);
            }
        }
        Ok(PerceptionEmbeddings { embeddings, human })
    }

    fn objective(&self, attribute: Attribute, pos: &[f64], neg: &[f64]) -> Option<f64> {
        let scores: Vec<f64> = self
            .embeddings
            .iter()
            .map(|e| score_from_embeddings(e, pos, neg).expect("unit embeddings"))
            .collect();
        match srocc(&scores, &self.human[attribute]) {
            Ok(r) => Some(r.value),
            Err(_) => None,
        }
    }
}
