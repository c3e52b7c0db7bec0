//! Procedural image corpora with independently drawn latent attributes,
//! used by the desk-scale training runs and the test suites.
//!
//! Each image mixes a smooth luma field (contrast latent), a fine-detail
//! field (sharpness latent), smooth opponent-color fields (colorfulness
//! latent), a base luma level (brightness latent), and shared-luminance
//! Gaussian noise (noisiness latent).

use crate::core::{DatasetManifest, ImageRaster, ManifestRecord, PerAttribute};
use crate::util::{rng_from, standard_normal};
use crate::vlm::zscored_stats;
use ndarray::Array3;
use rand::Rng;
use std::f64::consts::TAU;
use std::path::Path;

struct FieldSpec {
    freq_y: f64,
    freq_x: f64,
    phase: f64,
}

impl FieldSpec {
    fn draw(rng: &mut impl Rng, min_freq: f64, max_freq: f64) -> FieldSpec {
        FieldSpec {
            freq_y: rng.gen_range(min_freq..max_freq),
            freq_x: rng.gen_range(min_freq..max_freq),
            phase: rng.gen_range(0.0..TAU),
        }
    }

    fn eval(&self, y: f64, x: f64) -> f64 {
        (TAU * (self.freq_y * y + self.freq_x * x) + self.phase).sin()
    }
}

struct Latents {
    base_luma: f64,
    contrast_amp: f64,
    detail_amp: f64,
    chroma_amp: f64,
    noise_sigma: f64,
}

fn generate(id: String, h: usize, w: usize, seed: u64, latents: &Latents) -> ImageRaster {
    let mut rng = rng_from(&[0x5e_ed, seed]);
    let low: Vec<FieldSpec> = (0..3)
        .map(|_| FieldSpec::draw(&mut rng, 0.8, 3.0))
        .collect();
    let high: Vec<FieldSpec> = (0..2)
        .map(|_| FieldSpec::draw(&mut rng, 8.0, 16.0))
        .collect();
    let chroma_rg = FieldSpec::draw(&mut rng, 0.8, 2.5);
    let chroma_yb = FieldSpec::draw(&mut rng, 0.8, 2.5);

    let mut pixels = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let fy = y as f64 / h as f64;
            let fx = x as f64 / w as f64;
            let smooth: f64 = low.iter().map(|f| f.eval(fy, fx)).sum::<f64>() / 3.0;
            let detail: f64 = high.iter().map(|f| f.eval(fy, fx)).sum::<f64>() / 2.0;
            let noise = latents.noise_sigma * standard_normal(&mut rng);
            let luma = latents.base_luma
                + latents.contrast_amp * smooth
                + latents.detail_amp * detail
                + noise;
            let rg = latents.chroma_amp * chroma_rg.eval(fy, fx);
            let yb = latents.chroma_amp * chroma_yb.eval(fy, fx);
            // Inverse of rg = R-G, yb = (R+G)/2 - B with luma the channel mean.
            pixels[[y, x, 0]] = (luma + rg / 2.0 + yb / 3.0).clamp(0.0, 1.0);
            pixels[[y, x, 1]] = (luma - rg / 2.0 + yb / 3.0).clamp(0.0, 1.0);
            pixels[[y, x, 2]] = (luma - 2.0 * yb / 3.0).clamp(0.0, 1.0);
        }
    }
    ImageRaster::new(id, pixels).expect("generated raster is valid")
}

/// Corpus with wide latent ranges; the unit for training-scale runs.
pub fn procedural_corpus(n: usize, h: usize, w: usize, base_seed: u64) -> Vec<ImageRaster> {
    (0..n)
        .map(|i| {
            let seed = crate::util::derive_seed(&[base_seed, i as u64]);
            let mut rng = rng_from(&[0x001a_7e27, seed]);
            let latents = Latents {
                base_luma: rng.gen_range(0.35..0.62),
                contrast_amp: rng.gen_range(0.05..0.24),
                detail_amp: rng.gen_range(0.01..0.10),
                chroma_amp: rng.gen_range(0.02..0.24),
                noise_sigma: rng.gen_range(0.0..0.06),
            };
            generate(format!("syn_{base_seed}_{i:05}"), h, w, seed, &latents)
        })
        .collect()
}

/// Corpus with mid-range latents that leave headroom for every distortion
/// schedule (no saturation under brightness 1.5x, chroma under the clip).
pub fn proxy_corpus(n: usize, h: usize, w: usize, base_seed: u64) -> Vec<ImageRaster> {
    (0..n)
        .map(|i| {
            let seed = crate::util::derive_seed(&[base_seed ^ 0x99, i as u64]);
            let mut rng = rng_from(&[0x9_e0c0, seed]);
            let latents = Latents {
                base_luma: rng.gen_range(0.40..0.52),
                contrast_amp: rng.gen_range(0.08..0.16),
                detail_amp: rng.gen_range(0.03..0.08),
                chroma_amp: rng.gen_range(0.06..0.14),
                noise_sigma: rng.gen_range(0.0..0.02),
            };
            generate(format!("proxy_{base_seed}_{i:04}"), h, w, seed, &latents)
        })
        .collect()
}

/// Deterministic synthetic MOS: a fixed positive combination of the z-scored
/// analytic stats, shifted into a 1..9-ish range.
pub fn synthetic_mos(img: &ImageRaster) -> f64 {
    const WEIGHTS: [f64; 5] = [0.30, 0.20, 0.15, 0.20, 0.15];
    let z = zscored_stats(img);
    let combo: f64 = WEIGHTS.iter().zip(&z).map(|(w, v)| w * v).sum();
    5.0 + 1.5 * combo
}

/// Writes a corpus to `dir` as PNGs plus a JSON Lines manifest, optionally
/// attaching the synthetic MOS and per-attribute stat annotations.
pub fn write_corpus(
    dir: &Path,
    images: &[ImageRaster],
    name: &str,
    with_mos: bool,
    with_attribute_scores: bool,
) -> std::io::Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(images.len());
    for img in images {
        let file = format!("{}.png", img.image_id());
        let path = dir.join(&file);
        img.save_png(&path)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        // Annotate from the decoded file so labels match what training reads.
        let decoded = ImageRaster::from_png(&path, img.image_id())
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let z = zscored_stats(&decoded);
        records.push(ManifestRecord {
            image_id: img.image_id().to_owned(),
            path,
            mos: with_mos.then(|| synthetic_mos(&decoded)),
            attributes: with_attribute_scores.then(|| PerAttribute::from_fn(|a| z[a.index()])),
            split: None,
        });
    }
    let manifest =
        DatasetManifest::new(name, records).map_err(|e| std::io::Error::other(e.to_string()))?;
    let manifest_path = dir.join(format!("{name}.jsonl"));
    crate::core::save_manifest(&manifest, manifest_path)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(manifest)
}
