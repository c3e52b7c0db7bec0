//! Parameterized distortion bank with ordered intensity schedules and the
//! attribute-to-distortion map used by the distortion-intensity proxy task.

mod kernels;

use crate::core::{Attribute, ImageRaster};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistortionError {
    #[error("{kind:?}: level index {level} out of range (schedule has {len} levels)")]
    LevelOutOfRange {
        kind: DistortionKind,
        level: usize,
        len: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    GaussianBlur,
    ZoomBlur,
    LensBlur,
    ContrastAdjust,
    BrightnessAdjust,
    SaturationAdjust,
    GaussianNoise,
    IsoNoise,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 8] = [
        DistortionKind::GaussianBlur,
        DistortionKind::ZoomBlur,
        DistortionKind::LensBlur,
        DistortionKind::ContrastAdjust,
        DistortionKind::BrightnessAdjust,
        DistortionKind::SaturationAdjust,
        DistortionKind::GaussianNoise,
        DistortionKind::IsoNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::GaussianBlur => "gaussian_blur",
            DistortionKind::ZoomBlur => "zoom_blur",
            DistortionKind::LensBlur => "lens_blur",
            DistortionKind::ContrastAdjust => "contrast_adjust",
            DistortionKind::BrightnessAdjust => "brightness_adjust",
            DistortionKind::SaturationAdjust => "saturation_adjust",
            DistortionKind::GaussianNoise => "gaussian_noise",
            DistortionKind::IsoNoise => "iso_noise",
        }
    }

    pub fn from_name(name: &str) -> Option<DistortionKind> {
        DistortionKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// The attribute whose proxy task this distortion serves.
    pub fn attribute(self) -> Attribute {
        match self {
            DistortionKind::GaussianBlur | DistortionKind::ZoomBlur | DistortionKind::LensBlur => {
                Attribute::Sharpness
            }
            DistortionKind::ContrastAdjust => Attribute::Contrast,
            DistortionKind::BrightnessAdjust => Attribute::Brightness,
            DistortionKind::SaturationAdjust => Attribute::Colorfulness,
            DistortionKind::GaussianNoise | DistortionKind::IsoNoise => Attribute::Noisiness,
        }
    }

    fn tag(self) -> u64 {
        DistortionKind::ALL
            .iter()
            .position(|k| *k == self)
            .expect("kind is in ALL") as u64
    }
}

/// One level's kernel parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionParam {
    Scalar(f64),
    ReadShot { read: f64, shot: f64 },
}

impl DistortionParam {
    /// Scalar intensity key used for monotonicity checks.
    pub fn intensity(self) -> f64 {
        match self {
            DistortionParam::Scalar(v) => v,
            DistortionParam::ReadShot { read, shot } => read + shot,
        }
    }
}

/// Ordered intensity schedule for one distortion kind, with the direction the
/// matched attribute score is expected to move as the level index grows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSchedule {
    pub kind: DistortionKind,
    pub params: Vec<DistortionParam>,
    /// +1 if a higher level should raise the matched attribute score, -1 if lower.
    pub expected_direction: i8,
    pub seed: u64,
}

impl DistortionSchedule {
    pub fn levels(&self) -> usize {
        self.params.len()
    }

    /// Strict monotonicity of the level intensities.
    pub fn is_monotone(&self) -> bool {
        self.params
            .windows(2)
            .all(|w| w[0].intensity() < w[1].intensity())
    }
}

/// The distortions exercising each attribute:
/// sharpness gets the three blurs, contrast/brightness/colorfulness their
/// single adjustment, noisiness the two noise models.
pub fn distortions_for_attribute(a: Attribute) -> Vec<DistortionKind> {
    DistortionKind::ALL
        .into_iter()
        .filter(|k| k.attribute() == a)
        .collect()
}

/// Documented default schedule for a kind: five strictly increasing levels.
pub fn default_schedule(kind: DistortionKind) -> DistortionSchedule {
    use DistortionKind::*;
    use DistortionParam::*;
    let (params, expected_direction) = match kind {
        GaussianBlur => (scalars(&[0.5, 1.0, 2.0, 3.0, 4.0]), -1),
        ZoomBlur => (scalars(&[1.01, 1.02, 1.04, 1.07, 1.10]), -1),
        LensBlur => (scalars(&[1.0, 2.0, 3.0, 5.0, 7.0]), -1),
        ContrastAdjust => (scalars(&[0.4, 0.6, 0.8, 1.2, 1.5]), 1),
        BrightnessAdjust => (scalars(&[0.4, 0.6, 0.8, 1.2, 1.5]), 1),
        SaturationAdjust => (scalars(&[0.2, 0.5, 0.8, 1.2, 1.5]), 1),
        GaussianNoise => (scalars(&[0.02, 0.05, 0.1, 0.15, 0.2]), -1),
        IsoNoise => (
            vec![
                ReadShot {
                    read: 0.01,
                    shot: 0.02,
                },
                ReadShot {
                    read: 0.02,
                    shot: 0.04,
                },
                ReadShot {
                    read: 0.03,
                    shot: 0.08,
                },
                ReadShot {
                    read: 0.05,
                    shot: 0.12,
                },
                ReadShot {
                    read: 0.08,
                    shot: 0.16,
                },
            ],
            -1,
        ),
    };
    DistortionSchedule {
        kind,
        params,
        expected_direction,
        seed: 0,
    }
}

fn scalars(values: &[f64]) -> Vec<DistortionParam> {
    values.iter().map(|&v| DistortionParam::Scalar(v)).collect()
}

/// Applies `kind` at `level_index` of its default schedule.
pub fn apply_distortion(
    img: &ImageRaster,
    kind: DistortionKind,
    level_index: usize,
    seed: u64,
) -> Result<ImageRaster, DistortionError> {
    apply_scheduled(img, &default_schedule(kind), level_index, seed)
}

/// Applies one level of an explicit schedule.
pub fn apply_scheduled(
    img: &ImageRaster,
    schedule: &DistortionSchedule,
    level_index: usize,
    seed: u64,
) -> Result<ImageRaster, DistortionError> {
    let param = *schedule
        .params
        .get(level_index)
        .ok_or(DistortionError::LevelOutOfRange {
            kind: schedule.kind,
            level: level_index,
            len: schedule.params.len(),
        })?;
    Ok(apply_with_param(
        img,
        schedule.kind,
        param,
        seed,
        level_index as u64,
    ))
}

/// Applies a kind at an arbitrary parameter value. Neutral parameters
/// (blur sigma 0, zoom 1, radius 0, factor 1, noise sigma 0) reproduce the
/// input exactly; stochastic kinds draw from a stream keyed by
/// (seed, kind, level) so equal inputs give bit-identical outputs.
pub fn apply_with_param(
    img: &ImageRaster,
    kind: DistortionKind,
    param: DistortionParam,
    seed: u64,
    level: u64,
) -> ImageRaster {
    let stream = [seed, kind.tag(), level];
    match (kind, param) {
        (DistortionKind::GaussianBlur, DistortionParam::Scalar(sigma)) => {
            kernels::gaussian_blur(img, sigma)
        }
        (DistortionKind::ZoomBlur, DistortionParam::Scalar(max_zoom)) => {
            kernels::zoom_blur(img, max_zoom)
        }
        (DistortionKind::LensBlur, DistortionParam::Scalar(radius)) => {
            kernels::lens_blur(img, radius)
        }
        (DistortionKind::ContrastAdjust, DistortionParam::Scalar(factor)) => {
            kernels::contrast_adjust(img, factor)
        }
        (DistortionKind::BrightnessAdjust, DistortionParam::Scalar(factor)) => {
            kernels::brightness_adjust(img, factor)
        }
        (DistortionKind::SaturationAdjust, DistortionParam::Scalar(factor)) => {
            kernels::saturation_adjust(img, factor)
        }
        (DistortionKind::GaussianNoise, DistortionParam::Scalar(sigma)) => {
            kernels::gaussian_noise(img, sigma, &stream)
        }
        (DistortionKind::IsoNoise, DistortionParam::ReadShot { read, shot }) => {
            kernels::iso_noise(img, read, shot, &stream)
        }
        // A scalar fed to iso_noise is read noise only; a pair elsewhere uses its sum.
        (DistortionKind::IsoNoise, DistortionParam::Scalar(read)) => {
            kernels::iso_noise(img, read, 0.0, &stream)
        }
        (other, DistortionParam::ReadShot { read, shot }) => apply_with_param(
            img,
            other,
            DistortionParam::Scalar(read + shot),
            seed,
            level,
        ),
    }
}
