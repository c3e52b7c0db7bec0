//! Pretraining losses (margin-ranking over pseudo-label pairs, plus the L2
//! ablation), pair sampling, and the pretrain/fine-tune loops.

mod finetune;
mod optim;
mod prep;
mod pretrain;

pub use finetune::{finetune, FinetuneOutcome};
pub use optim::{cosine_lr, milestone_lr, AdamW};
pub use prep::PreprocessedDataset;
pub use pretrain::{pretrain, LossPoint, PretrainOutcome};

use crate::core::{PairSampler, PerAttribute, RankingOrientation};
use crate::model::{ForwardPass, Model};
use crate::vlm::AttributeScoreRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite input to loss")]
    NonFinite,
    #[error("margin must be positive, got {0}")]
    BadMargin(f64),
    #[error("pair sampling needs a batch of >= 2, got {0}")]
    BatchTooSmall(usize),
    #[error("image {0} has no pseudo-label record")]
    MissingLabels(String),
    #[error("manifest record {0} lacks a MOS value")]
    MissingMos(String),
    #[error("training dataset needs at least 2 usable images, got {0}")]
    DatasetTooSmall(usize),
    #[error("non-finite loss at epoch {epoch}, step {step}; aborting")]
    NonFiniteLoss { epoch: usize, step: u64 },
    #[error(transparent)]
    Config(#[from] crate::core::ConfigError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Checkpoint(#[from] crate::model::CheckpointError),
    #[error(transparent)]
    Raster(#[from] crate::core::RasterError),
    #[error("training io {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The raw comparison indicator:
/// 0 when s1 > s2, 1 when s1 <= s2 (ties included).
pub fn indicator(s1: f64, s2: f64) -> Result<u8, TrainError> {
    if !s1.is_finite() || !s2.is_finite() {
        return Err(TrainError::NonFinite);
    }
    Ok(if s1 > s2 { 0 } else { 1 })
}

/// Margin-ranking loss summed over attributes. For each attribute whose
/// pseudo-labels differ strictly, the higher-labeled sample's prediction
/// must exceed the other's by the margin: max(0, m - (E(hi) - E(lo))).
/// Tied pseudo-labels carry no ordering information and contribute zero.
pub fn pair_ranking_loss(
    pred1: &PerAttribute<f64>,
    pred2: &PerAttribute<f64>,
    lab1: &AttributeScoreRecord,
    lab2: &AttributeScoreRecord,
    margin: f64,
) -> Result<f64, TrainError> {
    let (loss, _, _) = ranking_loss_grad(
        pred1.values(),
        pred2.values(),
        lab1.scores.values(),
        lab2.scores.values(),
        margin,
        RankingOrientation::Corrected,
    )?;
    Ok(loss)
}

/// Loss and gradients w.r.t. both prediction vectors.
pub(crate) fn ranking_loss_grad(
    pred1: &[f64; 5],
    pred2: &[f64; 5],
    lab1: &[f64; 5],
    lab2: &[f64; 5],
    margin: f64,
    orientation: RankingOrientation,
) -> Result<(f64, [f64; 5], [f64; 5]), TrainError> {
    if margin <= 0.0 || !margin.is_finite() {
        return Err(TrainError::BadMargin(margin));
    }
    let all = pred1.iter().chain(pred2).chain(lab1).chain(lab2);
    if all.into_iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NonFinite);
    }
    let mut loss = 0.0;
    let mut d1 = [0.0; 5];
    let mut d2 = [0.0; 5];
    for a in 0..5 {
        match orientation {
            RankingOrientation::Corrected => {
                // Orient the hinge by the strict pseudo-label order.
                let (hi_pred, lo_pred, hi_grad, lo_grad) = if lab1[a] > lab2[a] {
                    (pred1[a], pred2[a], &mut d1[a], &mut d2[a])
                } else if lab2[a] > lab1[a] {
                    (pred2[a], pred1[a], &mut d2[a], &mut d1[a])
                } else {
                    continue;
                };
                let slack = margin - (hi_pred - lo_pred);
                if slack > 0.0 {
                    loss += slack;
                    *hi_grad -= 1.0;
                    *lo_grad += 1.0;
                }
            }
            RankingOrientation::Literal => {
                // max(0, m - (E(x1) - E(x2))) gated by the raw
                // indicator, which fires when lab1 <= lab2.
                if lab1[a] <= lab2[a] {
                    let slack = margin - (pred1[a] - pred2[a]);
                    if slack > 0.0 {
                        loss += slack;
                        d1[a] -= 1.0;
                        d2[a] += 1.0;
                    }
                }
            }
        }
    }
    Ok((loss, d1, d2))
}

/// L2 pretraining loss: sum over attributes of squared prediction error
/// against the pseudo-label.
pub fn l2_pretrain_loss(
    pred: &PerAttribute<f64>,
    lab: &AttributeScoreRecord,
) -> Result<f64, TrainError> {
    let (loss, _) = l2_loss_grad(pred.values(), lab.scores.values())?;
    Ok(loss)
}

pub(crate) fn l2_loss_grad(pred: &[f64; 5], lab: &[f64; 5]) -> Result<(f64, [f64; 5]), TrainError> {
    if pred.iter().chain(lab).any(|v| !v.is_finite()) {
        return Err(TrainError::NonFinite);
    }
    let mut loss = 0.0;
    let mut grad = [0.0; 5];
    for a in 0..5 {
        let d = pred[a] - lab[a];
        loss += d * d;
        grad[a] = 2.0 * d;
    }
    Ok((loss, grad))
}

/// Pairs batch members by index. Derangement mode draws a seeded cyclic
/// permutation (every element paired with a distinct partner, B pairs);
/// exhaustive mode returns all unordered pairs (B*(B-1)/2).
pub fn sample_pairs(
    batch_len: usize,
    mode: PairSampler,
    seed: u64,
) -> Result<Vec<(usize, usize)>, TrainError> {
    if batch_len < 2 {
        return Err(TrainError::BatchTooSmall(batch_len));
    }
    match mode {
        PairSampler::Derangement => {
            // Sattolo's shuffle yields a uniform single cycle, hence no
            // fixed points.
            let mut perm: Vec<usize> = (0..batch_len).collect();
            let mut state = crate::util::derive_seed(&[0x9a125, seed]);
            for i in (1..batch_len).rev() {
                let j = (crate::util::splitmix64(&mut state) % i as u64) as usize;
                perm.swap(i, j);
            }
            Ok((0..batch_len).map(|i| (i, perm[i])).collect())
        }
        PairSampler::Exhaustive => {
            let mut pairs = Vec::with_capacity(batch_len * (batch_len - 1) / 2);
            for i in 0..batch_len {
                for j in i + 1..batch_len {
                    pairs.push((i, j));
                }
            }
            Ok(pairs)
        }
    }
}

/// Loss plus full parameter gradient of the ranking loss on one image pair,
/// through heads and backbone. Shared by the training loop and the
/// finite-difference checks.
#[allow(clippy::too_many_arguments)]
pub fn ranking_pair_loss_and_grad(
    model: &Model,
    pass1: &ForwardPass,
    pass2: &ForwardPass,
    lab1: &[f64; 5],
    lab2: &[f64; 5],
    margin: f64,
    orientation: RankingOrientation,
    grad: &mut [f64],
) -> Result<f64, TrainError> {
    let (loss, d1, d2) = ranking_loss_grad(
        pass1.attributes.values(),
        pass2.attributes.values(),
        lab1,
        lab2,
        margin,
        orientation,
    )?;
    model.backward(pass1, Some(&d1), None, true, grad);
    model.backward(pass2, Some(&d2), None, true, grad);
    Ok(loss)
}

/// Loss plus full parameter gradient of the L2 pretraining loss on one image.
pub fn l2_image_loss_and_grad(
    model: &Model,
    pass: &ForwardPass,
    lab: &[f64; 5],
    grad: &mut [f64],
) -> Result<f64, TrainError> {
    let (loss, d) = l2_loss_grad(pass.attributes.values(), lab)?;
    model.backward(pass, Some(&d), None, true, grad);
    Ok(loss)
}
