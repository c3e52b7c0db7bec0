//! MOS fine-tuning: attaches a regressor over the concatenated head
//! features and trains with squared (or absolute) error under cosine
//! annealing. Linear probing freezes everything but the regressor.

use crate::core::{DatasetManifest, FinetuneLoss, RunConfig};
use crate::model::{load_checkpoint, save_checkpoint, CheckpointMeta, Model};
use crate::training::pretrain::{config_hash, shuffled_indices, write_loss_history};
use crate::training::{cosine_lr, prep::PreprocessedDataset, AdamW, LossPoint, TrainError};
use crate::util::derive_seed;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

pub struct FinetuneOutcome {
    pub model: Model,
    pub loss_history: Vec<LossPoint>,
    pub final_dir: PathBuf,
}

/// Fine-tunes a pretraining checkpoint on a MOS-annotated manifest.
/// With `linear_probe` set in the config, backbone and head parameters are
/// frozen and only the regressor trains.
pub fn finetune(
    checkpoint_dir: impl AsRef<Path>,
    manifest: &DatasetManifest,
    config: &RunConfig,
    out_dir: impl AsRef<Path>,
) -> Result<FinetuneOutcome, TrainError> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|source| TrainError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let mut mos = Vec::with_capacity(manifest.len());
    for record in manifest.records() {
        mos.push(
            record
                .mos
                .ok_or_else(|| TrainError::MissingMos(record.image_id.clone()))?,
        );
    }

    let (mut model, loaded_meta) = load_checkpoint(checkpoint_dir)?;
    model.attach_regressor(config.seed);

    let data =
        PreprocessedDataset::load(manifest, config.finetune.resize_short, config.finetune.crop)?;
    if data.len() < 2 {
        return Err(TrainError::DatasetTooSmall(data.len()));
    }

    let mask = trainable_mask(&model, config.finetune.linear_probe);
    let mut opt = AdamW::new(model.params().len(), config.finetune.weight_decay);
    let mut history = Vec::new();
    let mut step: u64 = 0;
    let f = &config.finetune;

    for epoch in 1..=f.epochs {
        let lr = cosine_lr(f.lr, epoch, f.epochs);
        let order = shuffled_indices(
            data.len(),
            derive_seed(&[config.seed ^ 0xf17e, epoch as u64]),
        );
        for chunk in order.chunks(f.batch) {
            if chunk.len() < 2 {
                continue;
            }
            step += 1;
            let step_seed = derive_seed(&[config.seed ^ 0xf17e, epoch as u64, step]);

            let passes: Vec<_> = chunk
                .par_iter()
                .map(|&idx| model.forward_cached(&data.random_crop(idx, step_seed)))
                .collect();

            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            let mut d_mos = vec![0.0f64; chunk.len()];
            for (k, &idx) in chunk.iter().enumerate() {
                let pred = passes[k].mos.expect("regressor attached");
                let err = pred - mos[idx];
                match f.loss {
                    FinetuneLoss::L2 => {
                        batch_loss += err * err * scale;
                        d_mos[k] = 2.0 * err * scale;
                    }
                    FinetuneLoss::L1 => {
                        batch_loss += err.abs() * scale;
                        d_mos[k] = err.signum() * scale;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }

            let descend = !f.linear_probe;
            let grads: Vec<Option<Vec<f64>>> = passes
                .par_iter()
                .zip(&d_mos)
                .map(|(pass, &d)| {
                    if d == 0.0 {
                        return None;
                    }
                    let mut g = vec![0.0; model.params().len()];
                    model.backward(pass, None, Some(d), descend, &mut g);
                    Some(g)
                })
                .collect();
            let mut grad = vec![0.0; model.params().len()];
            for g in grads.into_iter().flatten() {
                for (t, v) in grad.iter_mut().zip(g) {
                    *t += v;
                }
            }

            opt.step(model.params_mut(), &grad, lr, Some(&mask));
            history.push(LossPoint {
                step,
                epoch,
                loss: batch_loss,
                lr,
            });
        }
    }

    let final_dir = out_dir.join("final");
    let meta = CheckpointMeta {
        provider_id: loaded_meta.provider_id,
        prompt_set_id: loaded_meta.prompt_set_id,
        epoch: f.epochs,
        seed: config.seed,
        dataset: manifest.name.clone(),
        config_hash: config_hash(config),
        metrics: serde_json::json!({
            "final_batch_loss": history.last().map(|p| p.loss),
            "linear_probe": f.linear_probe,
        }),
    };
    save_checkpoint(&model, &meta, &final_dir)?;
    write_loss_history(&out_dir.join("loss_history.csv"), &history)?;

    Ok(FinetuneOutcome {
        model,
        loss_history: history,
        final_dir,
    })
}

/// Which parameters fine-tuning may update. The head output layers sit off
/// the fine-tune computation path and stay untouched in both modes.
fn trainable_mask(model: &Model, linear_probe: bool) -> Vec<bool> {
    let mut mask = vec![false; model.params().len()];
    let layout = model.layout();
    let reg = layout
        .regressor_range()
        .expect("fine-tuning requires a regressor");
    mask[reg].fill(true);
    if !linear_probe {
        mask[layout.backbone_range()].fill(true);
        for head in &layout.heads {
            mask[head.hidden.weights.start..head.hidden.bias.end].fill(true);
        }
    }
    mask
}
