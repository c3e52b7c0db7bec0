use ndarray::{Array3, Axis};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image {id}: dimensions {h}x{w} below the 8x8 minimum")]
    TooSmall { id: String, h: usize, w: usize },
    #[error("image {id}: pixel value {value} outside [0,1] at ({y},{x},{c})")]
    OutOfRange {
        id: String,
        value: f64,
        y: usize,
        x: usize,
        c: usize,
    },
    #[error("image {id}: expected 3 channels, got {channels}")]
    BadChannels { id: String, channels: usize },
    #[error("failed to read image {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("failed to write image {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// An RGB image with channel values in `[0,1]`, the unit every distortion,
/// provider, and preprocessing step consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRaster {
    image_id: String,
    pixels: Array3<f64>,
}

impl ImageRaster {
    /// Validates shape (H >= 8, W >= 8, 3 channels) and value range.
    pub fn new(image_id: impl Into<String>, pixels: Array3<f64>) -> Result<Self, RasterError> {
        let image_id = image_id.into();
        let (h, w, c) = pixels.dim();
        if c != 3 {
            return Err(RasterError::BadChannels {
                id: image_id,
                channels: c,
            });
        }
        if h < 8 || w < 8 {
            return Err(RasterError::TooSmall { id: image_id, h, w });
        }
        for ((y, x, ch), &v) in pixels.indexed_iter() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(RasterError::OutOfRange {
                    id: image_id,
                    value: v,
                    y,
                    x,
                    c: ch,
                });
            }
        }
        Ok(ImageRaster { image_id, pixels })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    /// Replaces the pixel array without re-validating; callers must keep
    /// values clipped to [0,1] and the shape unchanged.
    pub(crate) fn with_pixels(&self, pixels: Array3<f64>) -> ImageRaster {
        ImageRaster {
            image_id: self.image_id.clone(),
            pixels,
        }
    }

    /// Per-pixel luma, the mean of the three channels.
    pub fn luma(&self) -> ndarray::Array2<f64> {
        self.pixels
            .map_axis(Axis(2), |px| (px[0] + px[1] + px[2]) / 3.0)
    }

    pub fn from_png(
        path: impl AsRef<Path>,
        image_id: impl Into<String>,
    ) -> Result<Self, RasterError> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| RasterError::Read {
                path: path.display().to_string(),
                source,
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut pixels = Array3::zeros((h, w, 3));
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                pixels[[y as usize, x as usize, c]] = f64::from(p.0[c]) / 255.0;
            }
        }
        ImageRaster::new(image_id, pixels)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        let (h, w, _) = self.pixels.dim();
        let mut img = image::RgbImage::new(w as u32, h as u32);
        for (x, y, p) in img.enumerate_pixels_mut() {
            for c in 0..3 {
                let v = self.pixels[[y as usize, x as usize, c]];
                p.0[c] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        img.save(path).map_err(|source| RasterError::Write {
            path: path.display().to_string(),
            source,
        })
    }

    /// Crop of size `ch x cw` with top-left corner at `(top, left)`.
    /// Panics if the window falls outside the image.
    pub fn crop(&self, top: usize, left: usize, ch: usize, cw: usize) -> Array3<f64> {
        self.pixels
            .slice(ndarray::s![top..top + ch, left..left + cw, ..])
            .to_owned()
    }

    /// Bilinear resize to exactly `(new_h, new_w)`.
    pub fn resized(&self, new_h: usize, new_w: usize) -> ImageRaster {
        let (h, w, _) = self.pixels.dim();
        if new_h == h && new_w == w {
            return self.clone();
        }
        let out = bilinear_resize(&self.pixels, new_h, new_w);
        self.with_pixels(out)
    }

    /// Resize so the shorter edge equals `short`, preserving aspect ratio.
    pub fn resized_shorter_edge(&self, short: usize) -> ImageRaster {
        let (h, w, _) = self.pixels.dim();
        let (new_h, new_w) = if h <= w {
            let new_w = ((w as f64) * (short as f64) / (h as f64)).round().max(1.0) as usize;
            (short, new_w)
        } else {
            let new_h = ((h as f64) * (short as f64) / (w as f64)).round().max(1.0) as usize;
            (new_h, short)
        };
        self.resized(new_h, new_w)
    }
}

/// Bilinear interpolation with edge clamping, align-corners=false convention.
pub(crate) fn bilinear_resize(pixels: &Array3<f64>, new_h: usize, new_w: usize) -> Array3<f64> {
    let (h, w, c) = pixels.dim();
    let mut out = Array3::zeros((new_h, new_w, c));
    let sy = h as f64 / new_h as f64;
    let sx = w as f64 / new_w as f64;
    for oy in 0..new_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..new_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let top = pixels[[y0, x0, ch]] * (1.0 - wx) + pixels[[y0, x1, ch]] * wx;
                let bot = pixels[[y1, x0, ch]] * (1.0 - wx) + pixels[[y1, x1, ch]] * wx;
                out[[oy, ox, ch]] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    out
}
