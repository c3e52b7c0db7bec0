//! Five-crop inference, the repeated-split median protocol, cross-dataset
//! validation, and pairwise preference agreement.

use crate::core::{
    split_dataset, ten_split_seeds, DatasetManifest, EvalConfig, ImageRaster, RunConfig, SplitError,
};
use crate::metrics::{median, plcc, srocc, MetricError};
use crate::model::{ImageTensor, Model, ModelError};
use crate::training::TrainError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("manifest {0} lacks MOS values")]
    MissingMos(String),
    #[error("image {h}x{w} smaller than crop {crop} after resize")]
    ImageTooSmall { h: usize, w: usize, crop: usize },
    #[error("model predictions are constant; report withheld")]
    DegeneratePredictions,
    #[error("pairwise benchmark is empty")]
    EmptyBenchmark,
    #[error("benchmark line {0}: pair references the same image twice")]
    SamePathPair(usize),
    #[error("benchmark {path}: {msg}")]
    Benchmark { path: String, msg: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Raster(#[from] crate::core::RasterError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub splits: usize,
    pub seeds: Vec<u64>,
    pub five_crop: bool,
    pub crop: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub seed: u64,
    pub srocc: f64,
    pub plcc: f64,
}

/// Correlation report; headline values are medians over the per-split
/// values whenever more than one split ran.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub srocc: f64,
    /// Absent for cross-dataset reports.
    pub plcc: Option<f64>,
    pub protocol: EvalProtocol,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_split: Vec<SplitResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// The four corner offsets plus the floored center offset for a crop window.
pub fn five_crop_offsets(h: usize, w: usize, crop: usize) -> [(usize, usize); 5] {
    let dy = h - crop;
    let dx = w - crop;
    [(0, 0), (0, dx), (dy, 0), (dy, dx), (dy / 2, dx / 2)]
}

/// Resizes the shorter edge, takes the four corner crops plus the center
/// crop, and averages the MOS predictions.
pub fn five_crop_predict(
    model: &Model,
    img: &ImageRaster,
    resize_short: u32,
    crop: u32,
) -> Result<f64, EvalError> {
    let crop = crop as usize;
    let resized = img.resized_shorter_edge(resize_short as usize);
    let (h, w) = (resized.height(), resized.width());
    if h < crop || w < crop {
        return Err(EvalError::ImageTooSmall { h, w, crop });
    }
    let mut scores = Vec::with_capacity(5);
    for (top, left) in five_crop_offsets(h, w, crop) {
        let tensor = ImageTensor::from_pixels(&resized.crop(top, left, crop, crop));
        scores.push(model.forward_mos(&tensor)?);
    }
    Ok(order_free_mean(&scores))
}

// Mean that is invariant to enumeration order of the inputs and exact when
// all inputs are equal.
fn order_free_mean(values: &[f64]) -> f64 {
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return first;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// Single prediction under an eval config: five-crop averaging when enabled,
/// otherwise one center crop of the resized image.
pub fn predict(model: &Model, img: &ImageRaster, config: &EvalConfig) -> Result<f64, EvalError> {
    if config.five_crop {
        return five_crop_predict(model, img, config.resize_short, config.crop);
    }
    let crop = config.crop as usize;
    let resized = img.resized_shorter_edge(config.resize_short as usize);
    let (h, w) = (resized.height(), resized.width());
    if h < crop || w < crop {
        return Err(EvalError::ImageTooSmall { h, w, crop });
    }
    let (top, left) = ((h - crop) / 2, (w - crop) / 2);
    let tensor = ImageTensor::from_pixels(&resized.crop(top, left, crop, crop));
    Ok(model.forward_mos(&tensor)?)
}

/// Correlations between prediction and ground-truth vectors. Constant
/// predictions are an explicit error, never a silent zero.
pub fn evaluate_scores(predictions: &[f64], mos: &[f64]) -> Result<(f64, f64), EvalError> {
    let s = match srocc(predictions, mos) {
        Err(MetricError::DegenerateInput) => return Err(EvalError::DegeneratePredictions),
        other => other?,
    };
    let p = plcc(predictions, mos)?;
    Ok((s.value, p.value))
}

/// Scores a MOS-annotated manifest with the model and reports SROCC/PLCC.
pub fn evaluate(
    model: &Model,
    manifest: &DatasetManifest,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if !manifest.has_mos() {
        return Err(EvalError::MissingMos(manifest.name.clone()));
    }
    let predictions: Vec<f64> = manifest
        .records()
        .par_iter()
        .map(|record| {
            let img = ImageRaster::from_png(&record.path, &record.image_id)?;
            predict(model, &img, config)
        })
        .collect::<Result<_, _>>()?;
    let mos: Vec<f64> = manifest
        .records()
        .iter()
        .map(|r| r.mos.expect("has_mos"))
        .collect();
    let (s, p) = evaluate_scores(&predictions, &mos)?;
    Ok(EvalReport {
        dataset: manifest.name.clone(),
        srocc: s,
        plcc: Some(p),
        protocol: EvalProtocol {
            splits: 1,
            seeds: vec![],
            five_crop: config.five_crop,
            crop: config.crop,
        },
        per_split: vec![],
        warnings: vec![],
    })
}

/// The repeated-split protocol: ten 80/20 splits from seeds derived off the
/// config seed, a fresh training run per split, and median headline values.
pub fn run_protocol<F>(
    manifest: &DatasetManifest,
    config: &RunConfig,
    mut train_fn: F,
) -> Result<EvalReport, EvalError>
where
    F: FnMut(&DatasetManifest, u64) -> Result<Model, TrainError>,
{
    let seeds = ten_split_seeds(config.seed);
    let mut per_split = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let (train, test) = split_dataset(manifest, TRAIN_FRACTION, seed)?;
        let model = train_fn(&train, seed)?;
        let report = evaluate(&model, &test, &config.eval)?;
        per_split.push(SplitResult {
            seed,
            srocc: report.srocc,
            plcc: report.plcc.expect("evaluate reports plcc"),
        });
    }
    let sroccs: Vec<f64> = per_split.iter().map(|r| r.srocc).collect();
    let plccs: Vec<f64> = per_split.iter().map(|r| r.plcc).collect();
    Ok(EvalReport {
        dataset: manifest.name.clone(),
        srocc: median(&sroccs)?,
        plcc: Some(median(&plccs)?),
        protocol: EvalProtocol {
            splits: seeds.len(),
            seeds: seeds.to_vec(),
            five_crop: config.eval.five_crop,
            crop: config.eval.crop,
        },
        per_split,
        warnings: vec![],
    })
}

/// Evaluates a model on a dataset it was not trained on. Reports SROCC only;
/// differing MOS ranges across datasets make PLCC misleading there.
pub fn cross_dataset(
    model: &Model,
    train_name: &str,
    test_manifest: &DatasetManifest,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let mut report = evaluate(model, test_manifest, config)?;
    report.plcc = None;
    if test_manifest.name == train_name {
        report.warnings.push(format!(
            "test manifest '{train_name}' equals the training dataset"
        ));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preference {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPair {
    pub a: PathBuf,
    pub b: PathBuf,
    pub pref: Preference,
}

/// Pairs of images with a human preference each.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseBenchmark {
    pub pairs: Vec<BenchmarkPair>,
}

impl PairwiseBenchmark {
    pub fn new(pairs: Vec<BenchmarkPair>) -> Result<PairwiseBenchmark, EvalError> {
        for (i, pair) in pairs.iter().enumerate() {
            if pair.a == pair.b {
                return Err(EvalError::SamePathPair(i + 1));
            }
        }
        Ok(PairwiseBenchmark { pairs })
    }

    /// JSON Lines: {"a": path, "b": path, "pref": "A"|"B"} per line.
    pub fn load(path: impl AsRef<Path>) -> Result<PairwiseBenchmark, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Benchmark {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let pair: BenchmarkPair =
                serde_json::from_str(line).map_err(|e| EvalError::Benchmark {
                    path: path.display().to_string(),
                    msg: format!("line {}: {e}", i + 1),
                })?;
            pairs.push(pair);
        }
        PairwiseBenchmark::new(pairs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAgreement {
    /// Fraction of pairs where the model's argmax matches the human choice.
    pub agreement: f64,
    /// Exact prediction ties, counted as disagreements.
    pub ties: usize,
    pub n: usize,
}

/// Scores both members of every pair and reports how often the model's
/// preferred image matches the human preference.
pub fn compare_pairs(
    model: &Model,
    benchmark: &PairwiseBenchmark,
    config: &EvalConfig,
) -> Result<PairwiseAgreement, EvalError> {
    if benchmark.pairs.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    let outcomes: Vec<(Option<bool>, bool)> = benchmark
        .pairs
        .par_iter()
        .map(|pair| {
            let img_a = ImageRaster::from_png(&pair.a, pair.a.display().to_string())?;
            let img_b = ImageRaster::from_png(&pair.b, pair.b.display().to_string())?;
            let score_a = predict(model, &img_a, config)?;
            let score_b = predict(model, &img_b, config)?;
            let human_prefers_a = pair.pref == Preference::A;
            // An exact tie has no argmax; it counts as a disagreement.
            let model_prefers_a = (score_a != score_b).then_some(score_a > score_b);
            Ok::<_, EvalError>((model_prefers_a, human_prefers_a))
        })
        .collect::<Result<_, _>>()?;
    let ties = outcomes.iter().filter(|(m, _)| m.is_none()).count();
    let model_choice: Vec<bool> = outcomes.iter().map(|(m, h)| m.unwrap_or(!h)).collect();
    let human_choice: Vec<bool> = outcomes.iter().map(|(_, h)| *h).collect();
    Ok(PairwiseAgreement {
        agreement: crate::metrics::win_rate(&model_choice, &human_choice)?,
        ties,
        n: benchmark.pairs.len(),
    })
}
