//! Layer primitives for the desk CNN: strided 3x3 convolution via im2col,
//! mean/std global pooling, and dense layers. Everything is f64 with
//! hand-written backward passes so gradients are exact.

#![allow(clippy::too_many_arguments)]

pub(crate) const VAR_EPS: f64 = 1e-8;
pub(crate) const LEAKY_SLOPE: f64 = 0.1;
const KERNEL: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

/// Spatial output size of one conv stage: ceil(n / 2).
pub(crate) fn conv_out(n: usize) -> usize {
    n.div_ceil(2)
}

/// Gathers 3x3 stride-2 zero-padded patches.
/// `cols` layout: [position][in_c * 9], position = oy * out_w + ox,
/// patch element index = c * 9 + ky * 3 + kx.
pub(crate) fn im2col(input: &[f64], in_c: usize, in_h: usize, in_w: usize, cols: &mut Vec<f64>) {
    let out_h = conv_out(in_h);
    let out_w = conv_out(in_w);
    let patch_len = in_c * KERNEL * KERNEL;
    cols.clear();
    cols.resize(out_h * out_w * patch_len, 0.0);
    for oy in 0..out_h {
        for ox in 0..out_w {
            let base = (oy * out_w + ox) * patch_len;
            for c in 0..in_c {
                let plane = c * in_h * in_w;
                for ky in 0..KERNEL {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= in_h as isize {
                        continue;
                    }
                    let row = plane + iy as usize * in_w;
                    for kx in 0..KERNEL {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix < 0 || ix >= in_w as isize {
                            continue;
                        }
                        cols[base + c * 9 + ky * KERNEL + kx] = input[row + ix as usize];
                    }
                }
            }
        }
    }
}

/// out[oc * n_pos + pos] = bias[oc] + dot(weights[oc], cols[pos]).
pub(crate) fn conv_forward(
    weights: &[f64],
    bias: &[f64],
    cols: &[f64],
    out_c: usize,
    patch_len: usize,
    n_pos: usize,
    out: &mut [f64],
) {
    for pos in 0..n_pos {
        let col = &cols[pos * patch_len..(pos + 1) * patch_len];
        for oc in 0..out_c {
            let w = &weights[oc * patch_len..(oc + 1) * patch_len];
            let mut acc = bias[oc];
            for (a, b) in w.iter().zip(col) {
                acc += a * b;
            }
            out[oc * n_pos + pos] = acc;
        }
    }
}

/// Accumulates dW and db from the pre-activation gradient.
pub(crate) fn conv_backward_params(
    dpre: &[f64],
    cols: &[f64],
    out_c: usize,
    patch_len: usize,
    n_pos: usize,
    dw: &mut [f64],
    db: &mut [f64],
) {
    for oc in 0..out_c {
        let drow = &dpre[oc * n_pos..(oc + 1) * n_pos];
        let dwrow = &mut dw[oc * patch_len..(oc + 1) * patch_len];
        let mut bias_acc = 0.0;
        for (pos, &d) in drow.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            bias_acc += d;
            let col = &cols[pos * patch_len..(pos + 1) * patch_len];
            for (target, &c) in dwrow.iter_mut().zip(col) {
                *target += d * c;
            }
        }
        db[oc] += bias_acc;
    }
}

/// Accumulates the input gradient (col2im scatter of W^T . dpre).
pub(crate) fn conv_backward_input(
    dpre: &[f64],
    weights: &[f64],
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    dx: &mut [f64],
) {
    let out_h = conv_out(in_h);
    let out_w = conv_out(in_w);
    let n_pos = out_h * out_w;
    let patch_len = in_c * KERNEL * KERNEL;
    let mut dcol = vec![0.0; patch_len];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let pos = oy * out_w + ox;
            dcol.iter_mut().for_each(|v| *v = 0.0);
            for oc in 0..out_c {
                let d = dpre[oc * n_pos + pos];
                if d == 0.0 {
                    continue;
                }
                let w = &weights[oc * patch_len..(oc + 1) * patch_len];
                for (t, &wv) in dcol.iter_mut().zip(w) {
                    *t += d * wv;
                }
            }
            for c in 0..in_c {
                let plane = c * in_h * in_w;
                for ky in 0..KERNEL {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= in_h as isize {
                        continue;
                    }
                    let row = plane + iy as usize * in_w;
                    for kx in 0..KERNEL {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix < 0 || ix >= in_w as isize {
                            continue;
                        }
                        dx[row + ix as usize] += dcol[c * 9 + ky * KERNEL + kx];
                    }
                }
            }
        }
    }
}

pub(crate) fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub(crate) fn leaky_relu_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

pub(crate) fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub(crate) fn relu_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Channel-wise global mean and smoothed std over `n_pos` positions.
pub(crate) fn pool_forward(
    x: &[f64],
    channels: usize,
    n_pos: usize,
    means: &mut Vec<f64>,
    stds: &mut Vec<f64>,
) {
    means.clear();
    stds.clear();
    for c in 0..channels {
        let plane = &x[c * n_pos..(c + 1) * n_pos];
        let mean = plane.iter().sum::<f64>() / n_pos as f64;
        let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_pos as f64;
        means.push(mean);
        stds.push((var + VAR_EPS).sqrt());
    }
}

/// Backward of the mean/std pooling.
pub(crate) fn pool_backward(
    x: &[f64],
    means: &[f64],
    stds: &[f64],
    dmeans: &[f64],
    dstds: &[f64],
    channels: usize,
    n_pos: usize,
    dx: &mut [f64],
) {
    let inv_n = 1.0 / n_pos as f64;
    for c in 0..channels {
        let plane = &x[c * n_pos..(c + 1) * n_pos];
        let dplane = &mut dx[c * n_pos..(c + 1) * n_pos];
        let dmean = dmeans[c] * inv_n;
        let dstd_scale = dstds[c] * inv_n / stds[c];
        for (d, &v) in dplane.iter_mut().zip(plane) {
            *d += dmean + dstd_scale * (v - means[c]);
        }
    }
}

/// out = W x + b with W row-major [out_dim][in_dim].
pub(crate) fn linear_forward(
    weights: &[f64],
    bias: &[f64],
    x: &[f64],
    out_dim: usize,
    in_dim: usize,
    out: &mut [f64],
) {
    for o in 0..out_dim {
        let row = &weights[o * in_dim..(o + 1) * in_dim];
        let mut acc = bias[o];
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        out[o] = acc;
    }
}

/// Accumulates dW, db, and optionally dx for a dense layer.
pub(crate) fn linear_backward(
    weights: &[f64],
    x: &[f64],
    dout: &[f64],
    out_dim: usize,
    in_dim: usize,
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    for o in 0..out_dim {
        let d = dout[o];
        db[o] += d;
        if d != 0.0 {
            let dwrow = &mut dw[o * in_dim..(o + 1) * in_dim];
            for (t, &v) in dwrow.iter_mut().zip(x) {
                *t += d * v;
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            if d != 0.0 {
                let row = &weights[o * in_dim..(o + 1) * in_dim];
                for (t, &w) in dx.iter_mut().zip(row) {
                    *t += d * w;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_out_sizes() {
        assert_eq!(conv_out(64), 32);
        assert_eq!(conv_out(5), 3);
        assert_eq!(conv_out(1), 1);
    }

    #[test]
    fn conv_identity_kernel_passes_center_through() {
        // One input channel, one output channel, kernel that picks the center.
        let (in_h, in_w) = (4usize, 4usize);
        let input: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let mut cols = Vec::new();
        im2col(&input, 1, in_h, in_w, &mut cols);
        let mut weights = vec![0.0; 9];
        weights[4] = 1.0; // center tap
        let bias = [0.0];
        let mut out = vec![0.0; 4];
        conv_forward(&weights, &bias, &cols, 1, 9, 4, &mut out);
        // Stride 2 with pad 1 puts output (oy,ox) centers at input (2oy, 2ox).
        assert_eq!(out, vec![0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn pooling_stats_match_direct_computation() {
        let x = [1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0];
        let mut means = Vec::new();
        let mut stds = Vec::new();
        pool_forward(&x, 2, 4, &mut means, &mut stds);
        assert!((means[0] - 2.5).abs() < 1e-12);
        assert!((stds[0] - (1.25f64 + VAR_EPS).sqrt()).abs() < 1e-12);
        assert!((means[1] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn linear_layer_matches_manual_product() {
        let w = [1.0, 2.0, 3.0, 4.0]; // 2x2
        let b = [0.5, -0.5];
        let x = [1.0, -1.0];
        let mut out = [0.0; 2];
        linear_forward(&w, &b, &x, 2, 2, &mut out);
        assert_eq!(out, [-0.5, -1.5]);
    }
}
