//! Deterministic analytic embedding provider built from pixel statistics.
//!
//! Image embeddings are a fixed full-rank mixing of the z-scored analytic
//! stats; text embeddings of planted adjectives sit on the matching stat
//! axis, so planted antonym pairs score images monotonically in the matched
//! statistic. Adjectives outside the planted vocabulary read a nuisance
//! statistic (luma skewness) that no attribute annotation tracks, the way
//! arbitrary words respond to image content rather than quality.
//! Everything is seeded: equal inputs give equal vectors.

use crate::core::{Attribute, ImageRaster};
use crate::util::{rng_from, standard_normal, text_seed};
use crate::vlm::{EmbeddingProvider, VlmError};
use ndarray::Array2;
use std::collections::BTreeMap;

/// Embedding dimension of the mock.
pub const MOCK_DIM: usize = 64;

const AXIS_WEIGHT: f64 = 0.95;
const RESIDUAL_WEIGHT: f64 = 0.02;
const MIX_NOISE: f64 = 0.02;
// A large shared component keeps image-embedding norms nearly common, so
// each planted axis reads out its own stat with little cross-attribute
// leakage through the normalization.
const BIAS_DIM: usize = 8;
const BIAS_WEIGHT: f64 = 6.0;
// Unplanted adjectives couple to a nuisance statistic carried on its own
// embedding dimension; a pair built from one is guaranteed interference the
// selection proxies can measure.
const NUISANCE_DIM: usize = 9;
const NUISANCE_IMG_WEIGHT: f64 = 1.0;
const MOCK_SEED: u64 = 0x4d4f_434b; // stream tag for all internal draws

/// Reference location/scale of each analytic stat over the procedural
/// corpus; used to z-score stats before embedding so tanh stays responsive.
pub(crate) const STAT_MEAN: [f64; 5] = [0.07, 0.07, 0.47, 0.12, -0.15];
pub(crate) const STAT_STD: [f64; 5] = [0.04, 0.028, 0.09, 0.07, 0.08];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// Five pixel statistics in canonical attribute order:
/// mean gradient magnitude of luma, std of luma, mean luma, combined std of
/// the two opponent color channels, and negated mean absolute Laplacian
/// (so that cleaner images score higher on the noisiness axis).
pub fn analytic_stats(img: &ImageRaster) -> [f64; 5] {
    let luma = img.luma();
    let (h, w) = luma.dim();

    let mean_luma = luma.iter().sum::<f64>() / (h * w) as f64;
    let var_luma = luma
        .iter()
        .map(|v| (v - mean_luma) * (v - mean_luma))
        .sum::<f64>()
        / (h * w) as f64;

    // Interior central differences.
    let mut grad_sum = 0.0;
    let mut lap_sum = 0.0;
    let interior = ((h - 2) * (w - 2)) as f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (luma[[y, x + 1]] - luma[[y, x - 1]]) / 2.0;
            let gy = (luma[[y + 1, x]] - luma[[y - 1, x]]) / 2.0;
            grad_sum += (gx * gx + gy * gy).sqrt();
            let lap = luma[[y - 1, x]] + luma[[y + 1, x]] + luma[[y, x - 1]] + luma[[y, x + 1]]
                - 4.0 * luma[[y, x]];
            lap_sum += lap.abs();
        }
    }

    // Opponent channels rg = R-G, yb = (R+G)/2 - B.
    let px = img.pixels();
    let n = (h * w) as f64;
    let mut rg_sum = 0.0;
    let mut yb_sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            rg_sum += px[[y, x, 0]] - px[[y, x, 1]];
            yb_sum += (px[[y, x, 0]] + px[[y, x, 1]]) / 2.0 - px[[y, x, 2]];
        }
    }
    let (rg_mean, yb_mean) = (rg_sum / n, yb_sum / n);
    let mut rg_var = 0.0;
    let mut yb_var = 0.0;
    for y in 0..h {
        for x in 0..w {
            let rg = px[[y, x, 0]] - px[[y, x, 1]] - rg_mean;
            let yb = (px[[y, x, 0]] + px[[y, x, 1]]) / 2.0 - px[[y, x, 2]] - yb_mean;
            rg_var += rg * rg;
            yb_var += yb * yb;
        }
    }

    [
        grad_sum / interior,
        var_luma.sqrt(),
        mean_luma,
        ((rg_var + yb_var) / n).sqrt(),
        -lap_sum / interior,
    ]
}

/// Analytic stats z-scored against the fixed reference constants.
pub fn zscored_stats(img: &ImageRaster) -> [f64; 5] {
    let stats = analytic_stats(img);
    std::array::from_fn(|i| (stats[i] - STAT_MEAN[i]) / STAT_STD[i])
}

// Skewness of the luma distribution: the nuisance signal unplanted
// adjectives respond to.
fn nuisance_stat(img: &ImageRaster) -> f64 {
    let luma = img.luma();
    let n = luma.len() as f64;
    let mean = luma.iter().sum::<f64>() / n;
    let var = luma.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var < 1e-12 {
        return 0.0;
    }
    let m3 = luma.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    m3 / var.powf(1.5)
}

pub struct AnalyticMockProvider {
    planted: BTreeMap<String, (Attribute, Polarity)>,
    mixing: Array2<f64>, // MOCK_DIM x 5
}

impl AnalyticMockProvider {
    /// Mock with the default planted vocabulary (one adjective per polarity
    /// per attribute).
    pub fn new() -> Self {
        Self::with_planted(Self::default_planted())
    }

    pub fn with_planted(planted: BTreeMap<String, (Attribute, Polarity)>) -> Self {
        let mut rng = rng_from(&[MOCK_SEED, 1]);
        let mixing = Array2::from_shape_fn((MOCK_DIM, 5), |(i, a)| {
            let identity = if i == a { 1.0 } else { 0.0 };
            identity + MIX_NOISE * standard_normal(&mut rng)
        });
        AnalyticMockProvider { planted, mixing }
    }

    pub fn default_planted() -> BTreeMap<String, (Attribute, Polarity)> {
        use Attribute::*;
        use Polarity::*;
        [
            ("sharp", Sharpness, Positive),
            ("blurry", Sharpness, Negative),
            ("high-contrast", Contrast, Positive),
            ("low-contrast", Contrast, Negative),
            ("bright", Brightness, Positive),
            ("dark", Brightness, Negative),
            ("colorful", Colorfulness, Positive),
            ("monochrome", Colorfulness, Negative),
            ("noiseless", Noisiness, Positive),
            ("grainy", Noisiness, Negative),
        ]
        .into_iter()
        .map(|(adj, a, p)| (adj.to_owned(), (a, p)))
        .collect()
    }

    pub fn planted_adjective(&self, attribute: Attribute, polarity: Polarity) -> Option<&str> {
        self.planted
            .iter()
            .find(|(_, &(a, p))| a == attribute && p == polarity)
            .map(|(adj, _)| adj.as_str())
    }

    /// Strips the prompt template down to the adjective key.
    fn adjective_key(text: &str) -> String {
        let lower = text.trim().to_lowercase();
        lower.strip_suffix(" image").unwrap_or(&lower).to_owned()
    }

    fn residual(text: &str) -> Vec<f64> {
        let mut rng = rng_from(&[MOCK_SEED, 2, text_seed(text)]);
        let v: Vec<f64> = (0..MOCK_DIM).map(|_| standard_normal(&mut rng)).collect();
        normalize(v)
    }
}

impl Default for AnalyticMockProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl EmbeddingProvider for AnalyticMockProvider {
    fn provider_id(&self) -> &str {
        "analytic-mock"
    }

    fn dim(&self) -> usize {
        MOCK_DIM
    }

    fn embed_image(&self, img: &ImageRaster) -> Result<Vec<f64>, VlmError> {
        let z = zscored_stats(img);
        let squashed: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
        let mut out = vec![0.0; MOCK_DIM];
        for (i, row) in out.iter_mut().enumerate() {
            for (a, &sq) in squashed.iter().enumerate() {
                *row += self.mixing[[i, a]] * sq;
            }
        }
        out[BIAS_DIM] += BIAS_WEIGHT;
        out[NUISANCE_DIM] += NUISANCE_IMG_WEIGHT * nuisance_stat(img).tanh();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(VlmError::NonFinite);
        }
        Ok(normalize(out))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>, VlmError> {
        let key = Self::adjective_key(text);
        let residual = Self::residual(&key);
        let v = match self.planted.get(&key) {
            Some(&(attribute, polarity)) => {
                let sign = match polarity {
                    Polarity::Positive => 1.0,
                    Polarity::Negative => -1.0,
                };
                let mut v = vec![0.0; MOCK_DIM];
                v[attribute.index()] = sign * AXIS_WEIGHT;
                for (o, r) in v.iter_mut().zip(&residual) {
                    *o += RESIDUAL_WEIGHT * r;
                }
                v
            }
            None => {
                // Seeded direction plus a substantial coupling to the
                // nuisance axis, with a text-determined sign and magnitude.
                let mut rng = rng_from(&[MOCK_SEED, 4, text_seed(&key)]);
                let magnitude = 0.4 + 0.6 * rand::Rng::gen::<f64>(&mut rng);
                let sign = if rand::Rng::gen::<bool>(&mut rng) {
                    1.0
                } else {
                    -1.0
                };
                let mut v = residual;
                v[NUISANCE_DIM] += sign * magnitude;
                v
            }
        };
        Ok(normalize(v))
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Convenience used in tests: the mock's antonym score of an image against a
/// planted pair for `attribute`.
#[cfg(test)]
pub(crate) fn planted_pair_score(
    provider: &AnalyticMockProvider,
    img: &ImageRaster,
    attribute: Attribute,
) -> Result<f64, VlmError> {
    let pos = provider
        .planted_adjective(attribute, Polarity::Positive)
        .expect("planted positive");
    let neg = provider
        .planted_adjective(attribute, Polarity::Negative)
        .expect("planted negative");
    let e = provider.embed_image(img)?;
    let tp = provider.embed_text(pos)?;
    let tn = provider.embed_text(neg)?;
    crate::vlm::antonym_score(
        crate::vlm::cosine_similarity(&e, &tp)?,
        crate::vlm::cosine_similarity(&e, &tn)?,
    )
}
