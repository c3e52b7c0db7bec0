//! The pseudo-label pretraining loop: seeded shuffling and crops, in-batch
//! pair sampling, margin-ranking (or L2) loss, adaptive-moment updates with
//! milestone learning-rate decay, periodic checkpoints, and a loss history.

use crate::core::{DatasetManifest, PretrainLoss, RunConfig};
use crate::model::{init_model, save_checkpoint, CheckpointMeta, Model, ModelSpec};
use crate::training::{
    l2_loss_grad, milestone_lr, prep::PreprocessedDataset, ranking_loss_grad, sample_pairs, AdamW,
    TrainError,
};
use crate::util::derive_seed;
use crate::vlm::LabelStore;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

const CHECKPOINT_PERIOD: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossPoint {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

pub struct PretrainOutcome {
    pub model: Model,
    pub loss_history: Vec<LossPoint>,
    pub final_dir: PathBuf,
}

impl PretrainOutcome {
    /// Mean batch loss per epoch, in epoch order.
    pub fn epoch_mean_losses(&self) -> Vec<f64> {
        let max_epoch = self.loss_history.iter().map(|p| p.epoch).max().unwrap_or(0);
        (1..=max_epoch)
            .map(|e| {
                let pts: Vec<f64> = self
                    .loss_history
                    .iter()
                    .filter(|p| p.epoch == e)
                    .map(|p| p.loss)
                    .collect();
                pts.iter().sum::<f64>() / pts.len() as f64
            })
            .collect()
    }
}

pub(crate) fn config_hash(config: &RunConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    format!("{:x}", Sha256::digest(json.as_bytes()))
}

pub(crate) fn write_loss_history(path: &Path, history: &[LossPoint]) -> Result<(), TrainError> {
    let mut csv = String::from("step,epoch,loss,lr\n");
    for p in history {
        csv.push_str(&format!("{},{},{},{}\n", p.step, p.epoch, p.loss, p.lr));
    }
    std::fs::write(path, csv).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = derive_seed(&[0x0e0c4, seed]);
    for i in (1..n).rev() {
        let j = (crate::util::splitmix64(&mut state) % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

/// Runs the pretraining loop and returns the trained model plus its loss
/// history; checkpoints land under `out_dir` (periodic `epoch_*` snapshots
/// and a `final`). Deterministic given (manifest order, labels, config).
pub fn pretrain(
    manifest: &DatasetManifest,
    labels: &LabelStore,
    config: &RunConfig,
    out_dir: impl AsRef<Path>,
) -> Result<PretrainOutcome, TrainError> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|source| TrainError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let mut label_rows: Vec<[f64; 5]> = Vec::with_capacity(manifest.len());
    for record in manifest.records() {
        let row = labels
            .get(&record.image_id)
            .ok_or_else(|| TrainError::MissingLabels(record.image_id.clone()))?;
        label_rows.push(*row.scores.values());
    }
    let (provider_id, prompt_set_id) = labels
        .records()
        .next()
        .map(|r| (r.provider_id.clone(), r.prompt_set_id.clone()))
        .unwrap_or_default();

    let data =
        PreprocessedDataset::load(manifest, config.pretrain.resize_short, config.pretrain.crop)?;
    if data.len() < 2 {
        return Err(TrainError::DatasetTooSmall(data.len()));
    }

    let spec = ModelSpec::from_config(&config.model);
    let mut model = init_model(&spec, config.seed)?;
    let mut opt = AdamW::new(model.params().len(), config.pretrain.weight_decay);
    let mut history = Vec::new();
    let mut step: u64 = 0;
    let p = &config.pretrain;

    for epoch in 1..=p.epochs {
        let lr = milestone_lr(p.lr, p.lr_decay, &p.lr_milestones, epoch);
        let order = shuffled_indices(data.len(), derive_seed(&[config.seed, epoch as u64]));
        for chunk in order.chunks(p.batch) {
            if chunk.len() < 2 {
                continue;
            }
            step += 1;
            let step_seed = derive_seed(&[config.seed, epoch as u64, step]);

            let passes: Vec<_> = chunk
                .par_iter()
                .map(|&idx| model.forward_cached(&data.random_crop(idx, step_seed)))
                .collect();

            let mut d_attr = vec![[0.0f64; 5]; chunk.len()];
            let mut batch_loss = 0.0;
            match p.loss {
                PretrainLoss::Ranking => {
                    let pairs = sample_pairs(chunk.len(), p.pair_sampler, step_seed)?;
                    let scale = 1.0 / pairs.len() as f64;
                    for &(i, j) in &pairs {
                        let (loss, d1, d2) = ranking_loss_grad(
                            passes[i].attributes.values(),
                            passes[j].attributes.values(),
                            &label_rows[chunk[i]],
                            &label_rows[chunk[j]],
                            p.margin,
                            p.orientation,
                        )?;
                        batch_loss += loss * scale;
                        for a in 0..5 {
                            d_attr[i][a] += d1[a] * scale;
                            d_attr[j][a] += d2[a] * scale;
                        }
                    }
                }
                PretrainLoss::L2 => {
                    let scale = 1.0 / chunk.len() as f64;
                    for (k, &idx) in chunk.iter().enumerate() {
                        let (loss, grad) =
                            l2_loss_grad(passes[k].attributes.values(), &label_rows[idx])?;
                        batch_loss += loss * scale;
                        for a in 0..5 {
                            d_attr[k][a] = grad[a] * scale;
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }

            // Per-image backward in parallel; summed in batch order so runs
            // are bit-reproducible regardless of thread scheduling.
            let grads: Vec<Option<Vec<f64>>> = passes
                .par_iter()
                .zip(&d_attr)
                .map(|(pass, d)| {
                    if d.iter().all(|&v| v == 0.0) {
                        return None;
                    }
                    let mut g = vec![0.0; model.params().len()];
                    model.backward(pass, Some(d), None, true, &mut g);
                    Some(g)
                })
                .collect();
            let mut grad = vec![0.0; model.params().len()];
            for g in grads.into_iter().flatten() {
                for (t, v) in grad.iter_mut().zip(g) {
                    *t += v;
                }
            }

            opt.step(model.params_mut(), &grad, lr, None);
            history.push(LossPoint {
                step,
                epoch,
                loss: batch_loss,
                lr,
            });
        }

        if epoch % CHECKPOINT_PERIOD == 0 && epoch != p.epochs {
            let meta = meta_for(
                config,
                &manifest.name,
                &provider_id,
                &prompt_set_id,
                epoch,
                &history,
            );
            save_checkpoint(&model, &meta, out_dir.join(format!("epoch_{epoch:03}")))?;
        }
    }

    let final_dir = out_dir.join("final");
    let meta = meta_for(
        config,
        &manifest.name,
        &provider_id,
        &prompt_set_id,
        p.epochs,
        &history,
    );
    save_checkpoint(&model, &meta, &final_dir)?;
    write_loss_history(&out_dir.join("loss_history.csv"), &history)?;

    Ok(PretrainOutcome {
        model,
        loss_history: history,
        final_dir,
    })
}

fn meta_for(
    config: &RunConfig,
    dataset: &str,
    provider_id: &str,
    prompt_set_id: &str,
    epoch: usize,
    history: &[LossPoint],
) -> CheckpointMeta {
    let epoch_losses: Vec<f64> = history
        .iter()
        .filter(|p| p.epoch == epoch)
        .map(|p| p.loss)
        .collect();
    let mean = if epoch_losses.is_empty() {
        f64::NAN
    } else {
        epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64
    };
    CheckpointMeta {
        provider_id: provider_id.to_owned(),
        prompt_set_id: prompt_set_id.to_owned(),
        epoch,
        seed: config.seed,
        dataset: dataset.to_owned(),
        config_hash: config_hash(config),
        metrics: serde_json::json!({ "epoch_mean_loss": mean }),
    }
}
