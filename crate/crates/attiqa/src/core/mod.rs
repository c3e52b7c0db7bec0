//! Domain types shared by the whole pipeline: the five image attributes,
//! raster images, dataset manifests, split protocols, and run configuration.

mod config;
mod manifest;
pub(crate) mod raster;
mod split;

pub use config::{
    BackboneKind, ConfigError, EvalConfig, FinetuneConfig, FinetuneLoss, ModelConfig, PairSampler,
    PretrainConfig, PretrainLoss, RankingOrientation, RunConfig, Schedule,
};
pub use manifest::{
    load_manifest, save_manifest, DatasetManifest, ManifestError, ManifestRecord, SplitTag,
};
pub use raster::{ImageRaster, RasterError};
pub use split::{
    split_dataset, split_dataset_overriding_tags, split_official, ten_split_seeds, SplitError,
};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Index, IndexMut};

/// The five image attributes the pipeline scores and supervises.
///
/// The declaration order is canonical: feature concatenation, serialization,
/// and checkpoint layouts all follow it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Sharpness,
    Contrast,
    Brightness,
    Colorfulness,
    Noisiness,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Sharpness,
        Attribute::Contrast,
        Attribute::Brightness,
        Attribute::Colorfulness,
        Attribute::Noisiness,
    ];

    pub const COUNT: usize = 5;

    /// Position in the canonical ordering.
    pub fn index(self) -> usize {
        match self {
            Attribute::Sharpness => 0,
            Attribute::Contrast => 1,
            Attribute::Brightness => 2,
            Attribute::Colorfulness => 3,
            Attribute::Noisiness => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Sharpness => "sharpness",
            Attribute::Contrast => "contrast",
            Attribute::Brightness => "brightness",
            Attribute::Colorfulness => "colorfulness",
            Attribute::Noisiness => "noisiness",
        }
    }

    pub fn from_name(name: &str) -> Option<Attribute> {
        Attribute::ALL.into_iter().find(|a| a.name() == name)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per attribute, stored in canonical order.
///
/// Serializes as a JSON object with all five attribute names as keys;
/// deserialization rejects missing or unknown keys.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerAttribute<T>([T; 5]);

impl<T> PerAttribute<T> {
    pub fn new(values: [T; 5]) -> Self {
        PerAttribute(values)
    }

    pub fn from_fn(mut f: impl FnMut(Attribute) -> T) -> Self {
        PerAttribute(Attribute::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Attribute, &T)> {
        Attribute::ALL.into_iter().zip(self.0.iter())
    }

    pub fn values(&self) -> &[T; 5] {
        &self.0
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerAttribute<U> {
        PerAttribute(Attribute::ALL.map(|a| f(&self.0[a.index()])))
    }
}

impl<T> Index<Attribute> for PerAttribute<T> {
    type Output = T;
    fn index(&self, a: Attribute) -> &T {
        &self.0[a.index()]
    }
}

impl<T> IndexMut<Attribute> for PerAttribute<T> {
    fn index_mut(&mut self, a: Attribute) -> &mut T {
        &mut self.0[a.index()]
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttributeFields<T> {
    sharpness: T,
    contrast: T,
    brightness: T,
    colorfulness: T,
    noisiness: T,
}

impl<T: Serialize + Clone> Serialize for PerAttribute<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        AttributeFields {
            sharpness: self.0[0].clone(),
            contrast: self.0[1].clone(),
            brightness: self.0[2].clone(),
            colorfulness: self.0[3].clone(),
            noisiness: self.0[4].clone(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for PerAttribute<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let fields = AttributeFields::<T>::deserialize(deserializer)?;
        Ok(PerAttribute([
            fields.sharpness,
            fields.contrast,
            fields.brightness,
            fields.colorfulness,
            fields.noisiness,
        ]))
    }
}
