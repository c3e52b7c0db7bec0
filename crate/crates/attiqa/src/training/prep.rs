//! Training-side preprocessing: decode every manifest image once, resize the
//! shorter edge up front, and serve seeded random crops per step.

use crate::core::{DatasetManifest, ImageRaster};
use crate::model::ImageTensor;
use crate::training::TrainError;
use rayon::prelude::*;

/// Decoded, pre-resized images in manifest order.
pub struct PreprocessedDataset {
    images: Vec<ImageRaster>,
    ids: Vec<String>,
    crop: usize,
}

impl PreprocessedDataset {
    pub fn load(
        manifest: &DatasetManifest,
        resize_short: u32,
        crop: u32,
    ) -> Result<PreprocessedDataset, TrainError> {
        let images: Vec<ImageRaster> = manifest
            .records()
            .par_iter()
            .map(|record| {
                ImageRaster::from_png(&record.path, &record.image_id)
                    .map(|img| img.resized_shorter_edge(resize_short as usize))
            })
            .collect::<Result<_, _>>()?;
        Ok(PreprocessedDataset {
            ids: manifest
                .records()
                .iter()
                .map(|r| r.image_id.clone())
                .collect(),
            images,
            crop: crop as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    /// Seeded random crop of image `index` as a model input tensor.
    pub fn random_crop(&self, index: usize, seed: u64) -> ImageTensor {
        let img = &self.images[index];
        let max_top = img.height().saturating_sub(self.crop);
        let max_left = img.width().saturating_sub(self.crop);
        let mut state = crate::util::derive_seed(&[0xc209, seed, index as u64]);
        let top = if max_top == 0 {
            0
        } else {
            (crate::util::splitmix64(&mut state) % (max_top as u64 + 1)) as usize
        };
        let left = if max_left == 0 {
            0
        } else {
            (crate::util::splitmix64(&mut state) % (max_left as u64 + 1)) as usize
        };
        ImageTensor::from_pixels(&img.crop(top, left, self.crop, self.crop))
    }
}
