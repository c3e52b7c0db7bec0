use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse failure: {0}")]
    Parse(String),
    #[error("{section}: crop {crop} exceeds resize_short {resize_short}")]
    CropTooLarge {
        section: &'static str,
        crop: u32,
        resize_short: u32,
    },
    #[error("pretrain: margin must be positive, got {0}")]
    NonPositiveMargin(f64),
    #[error("{section}: epochs must be >= 1")]
    ZeroEpochs { section: &'static str },
    #[error("{section}: batch must be >= 2")]
    BatchTooSmall { section: &'static str },
    #[error("pretrain: lr_milestones must be strictly increasing and below epochs, got {0:?}")]
    BadMilestones(Vec<usize>),
    #[error("{section}: learning rate must be positive")]
    NonPositiveLr { section: &'static str },
    #[error("pretrain: lr_decay must lie in (0, 1], got {0}")]
    BadLrDecay(f64),
    #[error("model: {0}")]
    BadModel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSampler {
    Derangement,
    Exhaustive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainLoss {
    Ranking,
    L2,
}

/// How the margin hinge is oriented against the pseudo-label ordering.
/// `Corrected` pushes the higher-labeled sample's prediction above the
/// other's; `Literal` composes the raw comparison indicator with the
/// hinge as written, which opposes the pseudo-ordering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RankingOrientation {
    #[default]
    Corrected,
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneLoss {
    L2,
    L1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub resize_short: u32,
    pub crop: u32,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub margin: f64,
    pub pair_sampler: PairSampler,
    pub loss: PretrainLoss,
    #[serde(default)]
    pub orientation: RankingOrientation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub resize_short: u32,
    pub crop: u32,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub linear_probe: bool,
    pub loss: FinetuneLoss,
}

fn default_weight_decay() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub five_crop: bool,
    pub crop: u32,
    pub resize_short: u32,
}

/// Backbone selector: the in-repo trainable CNN, or a slot for an external
/// feature extractor registered by an adapter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackboneKind {
    DeskCnn,
    External(String),
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackboneKind::DeskCnn => f.write_str("desk_cnn"),
            BackboneKind::External(tag) => write!(f, "external:{tag}"),
        }
    }
}

impl FromStr for BackboneKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "desk_cnn" {
            Ok(BackboneKind::DeskCnn)
        } else if let Some(tag) = s.strip_prefix("external:") {
            if tag.is_empty() {
                Err("external backbone tag must be non-empty".to_owned())
            } else {
                Ok(BackboneKind::External(tag.to_owned()))
            }
        } else {
            Err(format!(
                "unknown backbone '{s}' (expected desk_cnn or external:<tag>)"
            ))
        }
    }
}

impl Serialize for BackboneKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BackboneKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    /// Backbone feature dimension D_b.
    pub backbone_dim: usize,
    /// Output channels of each desk-CNN conv stage.
    pub desk_stages: Vec<usize>,
    /// Hidden width of each two-layer attribute head.
    pub head_hidden: usize,
    /// Hidden width of the MOS regressor.
    pub reg_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: BackboneKind::DeskCnn,
            backbone_dim: 64,
            desk_stages: vec![12, 24, 48, 64],
            head_hidden: 512,
            reg_hidden: 512,
        }
    }
}

/// Full run configuration; one JSON document with unknown keys rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub eval: EvalConfig,
    #[serde(default)]
    pub model: ModelConfig,
}

impl RunConfig {
    /// Full-scale recipe: 256->224 pretrain crops over 100 epochs with
    /// milestone decay, 340->320 fine-tune crops under cosine annealing,
    /// five-crop evaluation at 320, margin 0.1, hidden width 512.
    pub fn full_scale() -> RunConfig {
        RunConfig {
            seed: 0,
            pretrain: PretrainConfig {
                resize_short: 256,
                crop: 224,
                batch: 256,
                epochs: 100,
                lr: 1e-4,
                weight_decay: 0.01,
                lr_milestones: vec![60, 80],
                lr_decay: 0.1,
                margin: 0.1,
                pair_sampler: PairSampler::Derangement,
                loss: PretrainLoss::Ranking,
                orientation: RankingOrientation::Corrected,
            },
            finetune: FinetuneConfig {
                resize_short: 340,
                crop: 320,
                batch: 64,
                epochs: 100,
                lr: 1e-4,
                weight_decay: 0.01,
                schedule: Schedule::Cosine,
                linear_probe: false,
                loss: FinetuneLoss::L2,
            },
            eval: EvalConfig {
                five_crop: true,
                crop: 320,
                resize_short: 340,
            },
            model: ModelConfig {
                backbone: BackboneKind::External("resnet50".to_owned()),
                backbone_dim: 2048,
                desk_stages: vec![],
                head_hidden: 512,
                reg_hidden: 512,
            },
        }
    }

    /// Desk-scale preset sized for 64x64 synthetic corpora on a CPU.
    pub fn desk() -> RunConfig {
        RunConfig {
            seed: 0,
            pretrain: PretrainConfig {
                resize_short: 64,
                crop: 64,
                batch: 32,
                epochs: 30,
                lr: 2e-3,
                weight_decay: 0.01,
                lr_milestones: vec![20, 26],
                lr_decay: 0.3,
                margin: 0.1,
                pair_sampler: PairSampler::Exhaustive,
                loss: PretrainLoss::Ranking,
                orientation: RankingOrientation::Corrected,
            },
            finetune: FinetuneConfig {
                resize_short: 64,
                crop: 64,
                batch: 32,
                epochs: 25,
                lr: 2e-3,
                weight_decay: 0.01,
                schedule: Schedule::Cosine,
                linear_probe: false,
                loss: FinetuneLoss::L2,
            },
            eval: EvalConfig {
                five_crop: true,
                crop: 64,
                resize_short: 64,
            },
            model: ModelConfig {
                backbone: BackboneKind::DeskCnn,
                backbone_dim: 64,
                desk_stages: vec![12, 24, 48, 64],
                head_hidden: 64,
                reg_hidden: 64,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pretrain;
        if p.crop > p.resize_short {
            return Err(ConfigError::CropTooLarge {
                section: "pretrain",
                crop: p.crop,
                resize_short: p.resize_short,
            });
        }
        if p.margin <= 0.0 || !p.margin.is_finite() {
            return Err(ConfigError::NonPositiveMargin(p.margin));
        }
        if p.epochs < 1 {
            return Err(ConfigError::ZeroEpochs {
                section: "pretrain",
            });
        }
        if p.batch < 2 {
            return Err(ConfigError::BatchTooSmall {
                section: "pretrain",
            });
        }
        if p.lr <= 0.0 {
            return Err(ConfigError::NonPositiveLr {
                section: "pretrain",
            });
        }
        if !(p.lr_decay > 0.0 && p.lr_decay <= 1.0) {
            return Err(ConfigError::BadLrDecay(p.lr_decay));
        }
        let increasing = p.lr_milestones.windows(2).all(|w| w[0] < w[1]);
        let below = p.lr_milestones.iter().all(|&m| m < p.epochs);
        if !(increasing && below) {
            return Err(ConfigError::BadMilestones(p.lr_milestones.clone()));
        }

        let f = &self.finetune;
        if f.crop > f.resize_short {
            return Err(ConfigError::CropTooLarge {
                section: "finetune",
                crop: f.crop,
                resize_short: f.resize_short,
            });
        }
        if f.epochs < 1 {
            return Err(ConfigError::ZeroEpochs {
                section: "finetune",
            });
        }
        if f.batch < 2 {
            return Err(ConfigError::BatchTooSmall {
                section: "finetune",
            });
        }
        if f.lr <= 0.0 {
            return Err(ConfigError::NonPositiveLr {
                section: "finetune",
            });
        }

        if self.eval.crop > self.eval.resize_short {
            return Err(ConfigError::CropTooLarge {
                section: "eval",
                crop: self.eval.crop,
                resize_short: self.eval.resize_short,
            });
        }

        let m = &self.model;
        if m.backbone_dim == 0 || m.head_hidden == 0 || m.reg_hidden == 0 {
            return Err(ConfigError::BadModel(
                "dimensions must be positive".to_owned(),
            ));
        }
        if m.backbone == BackboneKind::DeskCnn && m.desk_stages.is_empty() {
            return Err(ConfigError::BadModel(
                "desk_cnn backbone needs at least one conv stage".to_owned(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RunConfig::from_json(&text)
    }
}
