//! The distortion kernels. All of them clip to [0,1], preserve shape, and
//! return the input untouched at their neutral parameter.

use crate::core::ImageRaster;
use crate::util::{rng_from, standard_normal};
use ndarray::Array3;

/// Separable Gaussian blur, kernel radius ceil(3*sigma), reflect padding.
pub fn gaussian_blur(img: &ImageRaster, sigma: f64) -> ImageRaster {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut weights = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        weights.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= norm;
    }

    let (h, w, c) = img.pixels().dim();
    let src = img.pixels();
    // Horizontal pass.
    let mut tmp = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, wt) in weights.iter().enumerate() {
                    let sx = reflect(x as isize + k as isize - radius, w);
                    acc += wt * src[[y, sx, ch]];
                }
                tmp[[y, x, ch]] = acc;
            }
        }
    }
    // Vertical pass.
    let mut out = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, wt) in weights.iter().enumerate() {
                    let sy = reflect(y as isize + k as isize - radius, h);
                    acc += wt * tmp[[sy, x, ch]];
                }
                out[[y, x, ch]] = acc.clamp(0.0, 1.0);
            }
        }
    }
    img.with_pixels(out)
}

// Reflect-101 index mirroring.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * n - 2 - i;
        }
    }
    i as usize
}

const ZOOM_STEPS: usize = 8;

/// Mean of center-zoom-and-crop copies at factors linearly spaced in
/// [1, max_zoom].
pub fn zoom_blur(img: &ImageRaster, max_zoom: f64) -> ImageRaster {
    if max_zoom <= 1.0 {
        return img.clone();
    }
    let (h, w, c) = img.pixels().dim();
    let mut acc = Array3::<f64>::zeros((h, w, c));
    for step in 0..ZOOM_STEPS {
        let z = 1.0 + (max_zoom - 1.0) * step as f64 / (ZOOM_STEPS - 1) as f64;
        if z <= 1.0 {
            acc += img.pixels();
            continue;
        }
        let zh = ((h as f64) * z).round() as usize;
        let zw = ((w as f64) * z).round() as usize;
        let zoomed = crate::core::raster::bilinear_resize(img.pixels(), zh.max(h), zw.max(w));
        let top = (zh.max(h) - h) / 2;
        let left = (zw.max(w) - w) / 2;
        acc += &zoomed.slice(ndarray::s![top..top + h, left..left + w, ..]);
    }
    let out = acc.mapv(|v| (v / ZOOM_STEPS as f64).clamp(0.0, 1.0));
    img.with_pixels(out)
}

/// Normalized disk-kernel convolution with reflect padding.
pub fn lens_blur(img: &ImageRaster, radius: f64) -> ImageRaster {
    if radius <= 0.0 {
        return img.clone();
    }
    let r = radius.ceil() as isize;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if (dy * dy + dx * dx) as f64 <= radius * radius {
                offsets.push((dy, dx));
            }
        }
    }
    let weight = 1.0 / offsets.len() as f64;
    let (h, w, c) = img.pixels().dim();
    let src = img.pixels();
    let mut out = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for &(dy, dx) in &offsets {
                    let sy = reflect(y as isize + dy, h);
                    let sx = reflect(x as isize + dx, w);
                    acc += src[[sy, sx, ch]];
                }
                out[[y, x, ch]] = (acc * weight).clamp(0.0, 1.0);
            }
        }
    }
    img.with_pixels(out)
}

/// Scales deviations from the global mean: out = (in - mean) * factor + mean.
pub fn contrast_adjust(img: &ImageRaster, factor: f64) -> ImageRaster {
    if factor == 1.0 {
        return img.clone();
    }
    let mean = img.pixels().iter().sum::<f64>() / img.pixels().len() as f64;
    let out = img
        .pixels()
        .mapv(|v| ((v - mean) * factor + mean).clamp(0.0, 1.0));
    img.with_pixels(out)
}

/// Scales the V channel in HSV space.
pub fn brightness_adjust(img: &ImageRaster, factor: f64) -> ImageRaster {
    if factor == 1.0 {
        return img.clone();
    }
    hsv_map(img, |h, s, v| (h, s, (v * factor).clamp(0.0, 1.0)))
}

/// Scales the S channel in HSV space.
pub fn saturation_adjust(img: &ImageRaster, factor: f64) -> ImageRaster {
    if factor == 1.0 {
        return img.clone();
    }
    hsv_map(img, |h, s, v| (h, (s * factor).clamp(0.0, 1.0), v))
}

/// Additive white Gaussian noise, clipped.
pub fn gaussian_noise(img: &ImageRaster, sigma: f64, stream: &[u64]) -> ImageRaster {
    if sigma <= 0.0 {
        return img.clone();
    }
    let mut rng = rng_from(stream);
    let out = img
        .pixels()
        .mapv(|v| (v + sigma * standard_normal(&mut rng)).clamp(0.0, 1.0));
    img.with_pixels(out)
}

/// Poisson-Gaussian approximation of sensor noise:
/// out = clip(in + shot * sqrt(max(in,0)) * N1 + read * N2).
pub fn iso_noise(img: &ImageRaster, read: f64, shot: f64, stream: &[u64]) -> ImageRaster {
    if read <= 0.0 && shot <= 0.0 {
        return img.clone();
    }
    let mut rng = rng_from(stream);
    let out = img.pixels().mapv(|v| {
        let shot_term = shot * v.max(0.0).sqrt() * standard_normal(&mut rng);
        let read_term = read * standard_normal(&mut rng);
        (v + shot_term + read_term).clamp(0.0, 1.0)
    });
    img.with_pixels(out)
}

fn hsv_map(img: &ImageRaster, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> ImageRaster {
    let (h, w, _) = img.pixels().dim();
    let src = img.pixels();
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let (hh, ss, vv) = rgb_to_hsv(src[[y, x, 0]], src[[y, x, 1]], src[[y, x, 2]]);
            let (hh, ss, vv) = f(hh, ss, vv);
            let (r, g, b) = hsv_to_rgb(hh, ss, vv);
            out[[y, x, 0]] = r.clamp(0.0, 1.0);
            out[[y, x, 1]] = g.clamp(0.0, 1.0);
            out[[y, x, 2]] = b.clamp(0.0, 1.0);
        }
    }
    img.with_pixels(out)
}

/// Hexcone model; hue in [0,6), V = max(R,G,B).
fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let v = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = v - min;
    let s = if v > 0.0 { delta / v } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if v == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if v == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h, s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h.rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r1 + m, g1 + m, b1 + m)
}
