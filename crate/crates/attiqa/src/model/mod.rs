//! The scoring network: a trainable CNN backbone shared by five two-layer
//! attribute heads, with an optional MOS regressor over the concatenated
//! head features. Parameters live in one flat f64 vector addressed through
//! a [`Layout`], which keeps optimizer steps, checksums, serialization, and
//! finite-difference checks simple.

mod checkpoint;
pub(crate) mod net;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta};

use crate::core::{Attribute, BackboneKind, ImageRaster, ModelConfig, PerAttribute};
use crate::util::{rng_from, standard_normal};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model spec: {0}")]
    BadSpec(String),
    #[error("external backbone '{0}' has no registered adapter")]
    ExternalUnavailable(String),
    #[error("model has no regressor (pretrain-only checkpoint)")]
    NoRegressor,
    #[error("input tensor has {got} values, expected {expected}")]
    ShapeMismatch { got: usize, expected: usize },
}

/// Architecture description: backbone kind and widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backbone: BackboneKind,
    /// Output channels per desk-CNN conv stage.
    pub desk_stages: Vec<usize>,
    /// Backbone feature dimension D_b.
    pub backbone_dim: usize,
    /// Hidden width of each attribute head.
    pub head_hidden: usize,
    /// Hidden width of the MOS regressor.
    pub reg_hidden: usize,
}

impl ModelSpec {
    pub fn from_config(config: &ModelConfig) -> ModelSpec {
        ModelSpec {
            backbone: config.backbone.clone(),
            desk_stages: config.desk_stages.clone(),
            backbone_dim: config.backbone_dim,
            head_hidden: config.head_hidden,
            reg_hidden: config.reg_hidden,
        }
    }

    /// Desk-scale network for 64x64 inputs.
    pub fn desk() -> ModelSpec {
        ModelSpec {
            backbone: BackboneKind::DeskCnn,
            desk_stages: vec![12, 24, 48, 64],
            backbone_dim: 64,
            head_hidden: 64,
            reg_hidden: 64,
        }
    }

    /// Tiny network for gradient checks: one conv stage, D_b = 8, hidden 16.
    pub fn tiny() -> ModelSpec {
        ModelSpec {
            backbone: BackboneKind::DeskCnn,
            desk_stages: vec![4],
            backbone_dim: 8,
            head_hidden: 16,
            reg_hidden: 8,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.backbone_dim == 0 || self.head_hidden == 0 || self.reg_hidden == 0 {
            return Err(ModelError::BadSpec("zero-width layer".to_owned()));
        }
        match &self.backbone {
            BackboneKind::DeskCnn => {
                if self.desk_stages.is_empty() || self.desk_stages.contains(&0) {
                    return Err(ModelError::BadSpec(
                        "desk_cnn needs non-empty, non-zero conv stages".to_owned(),
                    ));
                }
                Ok(())
            }
            BackboneKind::External(tag) => Err(ModelError::ExternalUnavailable(tag.clone())),
        }
    }
}

/// Preprocessed model input: a 3-channel CHW tensor of any spatial size.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>, // [c][y][x]
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != 3 * height * width {
            return Err(ModelError::ShapeMismatch {
                got: data.len(),
                expected: 3 * height * width,
            });
        }
        Ok(ImageTensor {
            height,
            width,
            data,
        })
    }

    pub fn from_raster(img: &ImageRaster) -> ImageTensor {
        Self::from_pixels(img.pixels())
    }

    pub fn from_pixels(pixels: &ndarray::Array3<f64>) -> ImageTensor {
        let (h, w, _) = pixels.dim();
        let mut data = vec![0.0; 3 * h * w];
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data[c * h * w + y * w + x] = pixels[[y, x, c]];
                }
            }
        }
        ImageTensor {
            height: h,
            width: w,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseBlock {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvBlock {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
    pub in_c: usize,
    pub out_c: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeadBlock {
    pub hidden: DenseBlock,
    pub output: DenseBlock,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegressorBlock {
    pub hidden: DenseBlock,
    pub output: DenseBlock,
}

/// Flat-parameter addressing for every block of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub conv: Vec<ConvBlock>,
    pub fc: DenseBlock,
    pub heads: Vec<HeadBlock>,
    pub regressor: Option<RegressorBlock>,
    pub len: usize,
}

impl Layout {
    fn build(spec: &ModelSpec, with_regressor: bool) -> Layout {
        let mut cursor = 0usize;
        let mut dense = |in_dim: usize, out_dim: usize| -> DenseBlock {
            let weights = cursor..cursor + in_dim * out_dim;
            cursor = weights.end;
            let bias = cursor..cursor + out_dim;
            cursor = bias.end;
            DenseBlock {
                weights,
                bias,
                in_dim,
                out_dim,
            }
        };

        let mut conv = Vec::new();
        let mut in_c = 3usize;
        for &out_c in &spec.desk_stages {
            let block = dense(in_c * 9, out_c);
            conv.push(ConvBlock {
                weights: block.weights,
                bias: block.bias,
                in_c,
                out_c,
            });
            in_c = out_c;
        }
        // Mean + std pooling doubles the channel count feeding the projection.
        let fc = dense(2 * in_c, spec.backbone_dim);
        let heads = (0..Attribute::COUNT)
            .map(|_| HeadBlock {
                hidden: dense(spec.backbone_dim, spec.head_hidden),
                output: dense(spec.head_hidden, 1),
            })
            .collect();
        let regressor = with_regressor.then(|| RegressorBlock {
            hidden: dense(Attribute::COUNT * spec.head_hidden, spec.reg_hidden),
            output: dense(spec.reg_hidden, 1),
        });
        Layout {
            conv,
            fc,
            heads,
            regressor,
            len: cursor,
        }
    }

    /// Everything up to and including the feature projection.
    pub fn backbone_range(&self) -> Range<usize> {
        0..self.fc.bias.end
    }

    /// All five attribute heads.
    pub fn heads_range(&self) -> Range<usize> {
        let start = self.heads.first().expect("five heads").hidden.weights.start;
        let end = self.heads.last().expect("five heads").output.bias.end;
        start..end
    }

    pub fn head_range(&self, a: Attribute) -> Range<usize> {
        let h = &self.heads[a.index()];
        h.hidden.weights.start..h.output.bias.end
    }

    pub fn regressor_range(&self) -> Option<Range<usize>> {
        self.regressor
            .as_ref()
            .map(|r| r.hidden.weights.start..r.output.bias.end)
    }
}

/// Cached activations of one forward pass, enough to run backward.
pub struct ForwardPass {
    stage_inputs: Vec<Vec<f64>>,
    stage_dims: Vec<(usize, usize, usize)>, // (c, h, w) per stage input
    stage_preacts: Vec<Vec<f64>>,
    pool_means: Vec<f64>,
    pool_stds: Vec<f64>,
    features: Vec<f64>,
    head_pre1: Vec<Vec<f64>>,
    head_hidden: Vec<Vec<f64>>,
    pub attributes: PerAttribute<f64>,
    reg_pre1: Option<Vec<f64>>,
    reg_hidden: Option<Vec<f64>>,
    pub mos: Option<f64>,
}

impl ForwardPass {
    pub fn head_hidden(&self, a: Attribute) -> &[f64] {
        &self.head_hidden[a.index()]
    }

    /// Smallest |pre-activation| across every rectifier input of the pass.
    /// Finite-difference checks use it to reject configurations near a kink.
    pub fn min_abs_preactivation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for pre in self
            .stage_preacts
            .iter()
            .chain(&self.head_pre1)
            .chain(&self.reg_pre1)
        {
            for &v in pre {
                min = min.min(v.abs());
            }
        }
        min
    }
}

pub struct Model {
    spec: ModelSpec,
    layout: Layout,
    params: Vec<f64>,
}

/// Deterministic model initialization from (spec, seed).
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<Model, ModelError> {
    spec.validate()?;
    let layout = Layout::build(spec, false);
    let mut params = vec![0.0; layout.len];
    let mut rng = rng_from(&[0x10de1, seed]);
    for block in &layout.conv {
        init_dense(&mut params, &block.weights, block.in_c * 9, 2.0, &mut rng);
    }
    init_dense(
        &mut params,
        &layout.fc.weights.clone(),
        layout.fc.in_dim,
        1.0,
        &mut rng,
    );
    for head in layout.heads.clone() {
        init_dense(
            &mut params,
            &head.hidden.weights,
            head.hidden.in_dim,
            2.0,
            &mut rng,
        );
        init_dense(
            &mut params,
            &head.output.weights,
            head.output.in_dim,
            1.0,
            &mut rng,
        );
    }
    Ok(Model {
        spec: spec.clone(),
        layout,
        params,
    })
}

fn init_dense(
    params: &mut [f64],
    weights: &Range<usize>,
    fan_in: usize,
    gain: f64,
    rng: &mut rand_chacha::ChaCha20Rng,
) {
    let std = (gain / fan_in as f64).sqrt();
    for i in weights.clone() {
        params[i] = std * standard_normal(rng);
    }
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Escape hatch for parameter surgery (tests, probes, freezing checks).
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn has_regressor(&self) -> bool {
        self.layout.regressor.is_some()
    }

    pub(crate) fn from_parts(spec: ModelSpec, layout: Layout, params: Vec<f64>) -> Model {
        Model {
            spec,
            layout,
            params,
        }
    }

    /// Adds a freshly initialized regressor over the concatenated head
    /// features; a no-op if one is already attached.
    pub fn attach_regressor(&mut self, seed: u64) {
        if self.layout.regressor.is_some() {
            return;
        }
        let layout = Layout::build(&self.spec, true);
        self.params.resize(layout.len, 0.0);
        let reg = layout.regressor.clone().expect("regressor requested");
        let mut rng = rng_from(&[0x10de1, seed, 0x2e9]);
        init_dense(
            &mut self.params,
            &reg.hidden.weights,
            reg.hidden.in_dim,
            2.0,
            &mut rng,
        );
        init_dense(
            &mut self.params,
            &reg.output.weights,
            reg.output.in_dim,
            1.0,
            &mut rng,
        );
        self.layout = layout;
    }

    /// Full forward pass with cached activations.
    pub fn forward_cached(&self, x: &ImageTensor) -> ForwardPass {
        let p = &self.params;
        let mut stage_inputs = vec![x.data.clone()];
        let mut stage_dims = vec![(3usize, x.height, x.width)];
        let mut stage_preacts = Vec::with_capacity(self.layout.conv.len());
        let mut cols = Vec::new();

        for block in &self.layout.conv {
            let (c, h, w) = *stage_dims.last().expect("at least the input");
            let input = stage_inputs.last().expect("input present");
            net::im2col(input, c, h, w, &mut cols);
            let (oh, ow) = (net::conv_out(h), net::conv_out(w));
            let n_pos = oh * ow;
            let mut pre = vec![0.0; block.out_c * n_pos];
            net::conv_forward(
                &p[block.weights.clone()],
                &p[block.bias.clone()],
                &cols,
                block.out_c,
                c * 9,
                n_pos,
                &mut pre,
            );
            let act: Vec<f64> = pre.iter().map(|&v| net::leaky_relu(v)).collect();
            stage_preacts.push(pre);
            stage_inputs.push(act);
            stage_dims.push((block.out_c, oh, ow));
        }

        let (last_c, last_h, last_w) = *stage_dims.last().expect("final stage");
        let n_pos = last_h * last_w;
        let mut pool_means = Vec::new();
        let mut pool_stds = Vec::new();
        net::pool_forward(
            stage_inputs.last().expect("final activations"),
            last_c,
            n_pos,
            &mut pool_means,
            &mut pool_stds,
        );
        let pooled: Vec<f64> = pool_means.iter().chain(&pool_stds).copied().collect();

        let mut features = vec![0.0; self.layout.fc.out_dim];
        net::linear_forward(
            &p[self.layout.fc.weights.clone()],
            &p[self.layout.fc.bias.clone()],
            &pooled,
            self.layout.fc.out_dim,
            self.layout.fc.in_dim,
            &mut features,
        );

        let mut head_pre1 = Vec::with_capacity(5);
        let mut head_hidden = Vec::with_capacity(5);
        let mut outputs = [0.0; 5];
        for (i, head) in self.layout.heads.iter().enumerate() {
            let mut pre1 = vec![0.0; head.hidden.out_dim];
            net::linear_forward(
                &p[head.hidden.weights.clone()],
                &p[head.hidden.bias.clone()],
                &features,
                head.hidden.out_dim,
                head.hidden.in_dim,
                &mut pre1,
            );
            let hidden: Vec<f64> = pre1.iter().map(|&v| net::relu(v)).collect();
            let mut out = [0.0];
            net::linear_forward(
                &p[head.output.weights.clone()],
                &p[head.output.bias.clone()],
                &hidden,
                1,
                head.output.in_dim,
                &mut out,
            );
            outputs[i] = out[0];
            head_pre1.push(pre1);
            head_hidden.push(hidden);
        }

        let (reg_pre1, reg_hidden, mos) = match &self.layout.regressor {
            Some(reg) => {
                let concat: Vec<f64> = head_hidden.iter().flatten().copied().collect();
                let mut pre1 = vec![0.0; reg.hidden.out_dim];
                net::linear_forward(
                    &p[reg.hidden.weights.clone()],
                    &p[reg.hidden.bias.clone()],
                    &concat,
                    reg.hidden.out_dim,
                    reg.hidden.in_dim,
                    &mut pre1,
                );
                let hidden: Vec<f64> = pre1.iter().map(|&v| net::relu(v)).collect();
                let mut out = [0.0];
                net::linear_forward(
                    &p[reg.output.weights.clone()],
                    &p[reg.output.bias.clone()],
                    &hidden,
                    1,
                    reg.output.in_dim,
                    &mut out,
                );
                (Some(pre1), Some(hidden), Some(out[0]))
            }
            None => (None, None, None),
        };

        ForwardPass {
            stage_inputs,
            stage_dims,
            stage_preacts,
            pool_means,
            pool_stds,
            features,
            head_pre1,
            head_hidden,
            attributes: PerAttribute::new(outputs),
            reg_pre1,
            reg_hidden,
            mos,
        }
    }

    /// The five attribute-head outputs E_a(x).
    pub fn forward_attributes(&self, x: &ImageTensor) -> PerAttribute<f64> {
        self.forward_cached(x).attributes
    }

    /// Each head's penultimate (hidden) activation; concatenating in
    /// canonical attribute order gives the regressor input.
    pub fn head_features(&self, x: &ImageTensor) -> PerAttribute<Vec<f64>> {
        let pass = self.forward_cached(x);
        PerAttribute::from_fn(|a| pass.head_hidden[a.index()].clone())
    }

    /// MOS prediction from the regressor over concatenated head features.
    pub fn forward_mos(&self, x: &ImageTensor) -> Result<f64, ModelError> {
        self.forward_cached(x).mos.ok_or(ModelError::NoRegressor)
    }

    /// Accumulates parameter gradients for the given output gradients.
    /// `d_attributes` seeds the head outputs, `d_mos` the regressor output.
    /// With `descend_backbone` false the walk stops after the regressor
    /// (used by linear probing).
    pub fn backward(
        &self,
        pass: &ForwardPass,
        d_attributes: Option<&[f64; 5]>,
        d_mos: Option<f64>,
        descend_backbone: bool,
        grad: &mut [f64],
    ) {
        assert_eq!(grad.len(), self.layout.len, "gradient buffer size");
        let p = &self.params;
        let hidden_w = self.spec.head_hidden;
        let mut d_head_hidden: Vec<Vec<f64>> = (0..5).map(|_| vec![0.0; hidden_w]).collect();

        if let Some(d_mos) = d_mos {
            let reg = self
                .layout
                .regressor
                .as_ref()
                .expect("d_mos requires a regressor");
            let reg_hidden = pass.reg_hidden.as_ref().expect("regressor pass");
            let reg_pre1 = pass.reg_pre1.as_ref().expect("regressor pass");
            let mut d_hidden = vec![0.0; reg.output.in_dim];
            let (gw, gb) = split_two(grad, &reg.output.weights, &reg.output.bias);
            net::linear_backward(
                &p[reg.output.weights.clone()],
                reg_hidden,
                &[d_mos],
                1,
                reg.output.in_dim,
                gw,
                gb,
                Some(&mut d_hidden),
            );
            let d_pre1: Vec<f64> = d_hidden
                .iter()
                .zip(reg_pre1)
                .map(|(&d, &pre)| d * net::relu_grad(pre))
                .collect();
            let concat: Vec<f64> = pass.head_hidden.iter().flatten().copied().collect();
            let mut d_concat = vec![0.0; reg.hidden.in_dim];
            let (gw, gb) = split_two(grad, &reg.hidden.weights, &reg.hidden.bias);
            net::linear_backward(
                &p[reg.hidden.weights.clone()],
                &concat,
                &d_pre1,
                reg.hidden.out_dim,
                reg.hidden.in_dim,
                gw,
                gb,
                Some(&mut d_concat),
            );
            for (a, d_h) in d_head_hidden.iter_mut().enumerate() {
                for (t, &v) in d_h
                    .iter_mut()
                    .zip(&d_concat[a * hidden_w..(a + 1) * hidden_w])
                {
                    *t += v;
                }
            }
        }

        if let Some(d_attr) = d_attributes {
            for (i, head) in self.layout.heads.iter().enumerate() {
                if d_attr[i] == 0.0 {
                    continue;
                }
                let (gw, gb) = split_two(grad, &head.output.weights, &head.output.bias);
                net::linear_backward(
                    &p[head.output.weights.clone()],
                    &pass.head_hidden[i],
                    &[d_attr[i]],
                    1,
                    head.output.in_dim,
                    gw,
                    gb,
                    Some(&mut d_head_hidden[i]),
                );
            }
        }

        if !descend_backbone {
            return;
        }

        let mut d_features = vec![0.0; self.spec.backbone_dim];
        for (i, head) in self.layout.heads.iter().enumerate() {
            if d_head_hidden[i].iter().all(|&v| v == 0.0) {
                continue;
            }
            let d_pre1: Vec<f64> = d_head_hidden[i]
                .iter()
                .zip(&pass.head_pre1[i])
                .map(|(&d, &pre)| d * net::relu_grad(pre))
                .collect();
            let (gw, gb) = split_two(grad, &head.hidden.weights, &head.hidden.bias);
            net::linear_backward(
                &p[head.hidden.weights.clone()],
                &pass.features,
                &d_pre1,
                head.hidden.out_dim,
                head.hidden.in_dim,
                gw,
                gb,
                Some(&mut d_features),
            );
        }

        if d_features.iter().all(|&v| v == 0.0) {
            return;
        }

        // Feature projection.
        let pooled: Vec<f64> = pass
            .pool_means
            .iter()
            .chain(&pass.pool_stds)
            .copied()
            .collect();
        let mut d_pooled = vec![0.0; self.layout.fc.in_dim];
        let (gw, gb) = split_two(grad, &self.layout.fc.weights, &self.layout.fc.bias);
        net::linear_backward(
            &p[self.layout.fc.weights.clone()],
            &pooled,
            &d_features,
            self.layout.fc.out_dim,
            self.layout.fc.in_dim,
            gw,
            gb,
            Some(&mut d_pooled),
        );

        let (last_c, last_h, last_w) = *pass.stage_dims.last().expect("final stage");
        let n_pos = last_h * last_w;
        let mut d_act = vec![0.0; last_c * n_pos];
        net::pool_backward(
            pass.stage_inputs.last().expect("final activations"),
            &pass.pool_means,
            &pass.pool_stds,
            &d_pooled[..last_c],
            &d_pooled[last_c..],
            last_c,
            n_pos,
            &mut d_act,
        );

        let mut cols = Vec::new();
        for (i, block) in self.layout.conv.iter().enumerate().rev() {
            let (in_c, in_h, in_w) = pass.stage_dims[i];
            let n_pos = net::conv_out(in_h) * net::conv_out(in_w);
            let d_pre: Vec<f64> = d_act
                .iter()
                .zip(&pass.stage_preacts[i])
                .map(|(&d, &pre)| d * net::leaky_relu_grad(pre))
                .collect();
            net::im2col(&pass.stage_inputs[i], in_c, in_h, in_w, &mut cols);
            let (gw, gb) = split_two(grad, &block.weights, &block.bias);
            net::conv_backward_params(&d_pre, &cols, block.out_c, in_c * 9, n_pos, gw, gb);
            if i > 0 {
                let mut d_input = vec![0.0; in_c * in_h * in_w];
                net::conv_backward_input(
                    &d_pre,
                    &p[block.weights.clone()],
                    in_c,
                    in_h,
                    in_w,
                    block.out_c,
                    &mut d_input,
                );
                d_act = d_input;
            }
        }
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        region_checksum(&self.params, 0..self.params.len())
    }

    pub fn backbone_checksum(&self) -> String {
        region_checksum(&self.params, self.layout.backbone_range())
    }

    pub fn heads_checksum(&self) -> String {
        region_checksum(&self.params, self.layout.heads_range())
    }

    pub fn regressor_checksum(&self) -> Option<String> {
        self.layout
            .regressor_range()
            .map(|r| region_checksum(&self.params, r))
    }
}

fn region_checksum(params: &[f64], range: Range<usize>) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for &v in &params[range] {
        hasher.update(v.to_le_bytes());
    }
    format!("{:x}", hasher.finalize())
}

// Two disjoint mutable views into the gradient buffer.
fn split_two<'a>(
    grad: &'a mut [f64],
    a: &Range<usize>,
    b: &Range<usize>,
) -> (&'a mut [f64], &'a mut [f64]) {
    assert!(a.end <= b.start, "blocks must be ordered and disjoint");
    let (left, right) = grad.split_at_mut(b.start);
    (&mut left[a.clone()], &mut right[..b.end - b.start])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_input(seed: u64) -> ImageTensor {
        let mut rng = rng_from(&[0x717e, seed]);
        let data: Vec<f64> = (0..3 * 4 * 4)
            .map(|_| 0.5 + 0.2 * standard_normal(&mut rng))
            .collect();
        ImageTensor::new(4, 4, data).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_has_five_heads() {
        let spec = ModelSpec::tiny();
        let a = init_model(&spec, 7).unwrap();
        let b = init_model(&spec, 7).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        let c = init_model(&spec, 8).unwrap();
        assert_ne!(a.checksum(), c.checksum());
        assert_eq!(a.layout().heads.len(), 5);
    }

    #[test]
    fn head_layer_shapes_follow_spec_dims() {
        let mut spec = ModelSpec::tiny();
        spec.backbone_dim = 64;
        spec.head_hidden = 512;
        let model = init_model(&spec, 0).unwrap();
        let head = &model.layout().heads[0];
        assert_eq!((head.hidden.in_dim, head.hidden.out_dim), (64, 512));
        assert_eq!((head.output.in_dim, head.output.out_dim), (512, 1));
    }

    #[test]
    fn external_backbone_is_an_unregistered_slot() {
        let mut spec = ModelSpec::tiny();
        spec.backbone = BackboneKind::External("resnet50".to_owned());
        assert!(matches!(
            init_model(&spec, 0),
            Err(ModelError::ExternalUnavailable(_))
        ));
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let model = init_model(&ModelSpec::tiny(), 3).unwrap();
        let x = tiny_input(1);
        let a = model.forward_attributes(&x);
        let b = model.forward_attributes(&x);
        assert_eq!(a, b);
        for (_, &v) in a.iter() {
            assert!(v.is_finite());
        }
    }

    #[test]
    fn zeroing_a_head_output_layer_leaves_its_bias() {
        let mut model = init_model(&ModelSpec::tiny(), 5).unwrap();
        let head = model.layout().heads[Attribute::Contrast.index()].clone();
        for i in head.output.weights.clone() {
            model.params_mut()[i] = 0.0;
        }
        model.params_mut()[head.output.bias.start] = 0.375;
        let out = model.forward_attributes(&tiny_input(2));
        assert_eq!(out[Attribute::Contrast], 0.375);
    }

    #[test]
    fn head_perturbation_does_not_leak_across_attributes() {
        let mut model = init_model(&ModelSpec::tiny(), 9).unwrap();
        let x = tiny_input(3);
        let before = model.forward_attributes(&x);
        let range = model.layout().head_range(Attribute::Sharpness);
        for i in range {
            model.params_mut()[i] += 0.05;
        }
        let after = model.forward_attributes(&x);
        assert_ne!(before[Attribute::Sharpness], after[Attribute::Sharpness]);
        for a in [
            Attribute::Contrast,
            Attribute::Brightness,
            Attribute::Colorfulness,
            Attribute::Noisiness,
        ] {
            assert_eq!(before[a], after[a], "{a} leaked");
        }
    }

    #[test]
    fn head_features_concatenate_to_the_regressor_input() {
        let mut model = init_model(&ModelSpec::tiny(), 11).unwrap();
        let x = tiny_input(4);
        assert!(matches!(
            model.forward_mos(&x),
            Err(ModelError::NoRegressor)
        ));
        model.attach_regressor(11);
        let features = model.head_features(&x);
        let concat: Vec<f64> = Attribute::ALL
            .into_iter()
            .flat_map(|a| features[a].clone())
            .collect();
        assert_eq!(concat.len(), 5 * model.spec().head_hidden);
        // Recompute the regressor on the concatenated features by hand.
        let reg = model.layout().regressor.clone().unwrap();
        let p = model.params();
        let mut pre1 = vec![0.0; reg.hidden.out_dim];
        net::linear_forward(
            &p[reg.hidden.weights.clone()],
            &p[reg.hidden.bias.clone()],
            &concat,
            reg.hidden.out_dim,
            reg.hidden.in_dim,
            &mut pre1,
        );
        let hidden: Vec<f64> = pre1.iter().map(|&v| net::relu(v)).collect();
        let mut out = [0.0];
        net::linear_forward(
            &p[reg.output.weights.clone()],
            &p[reg.output.bias.clone()],
            &hidden,
            1,
            reg.output.in_dim,
            &mut out,
        );
        assert_eq!(model.forward_mos(&x).unwrap(), out[0]);
    }

    #[test]
    fn attach_regressor_is_idempotent_and_preserves_heads() {
        let mut model = init_model(&ModelSpec::tiny(), 13).unwrap();
        let x = tiny_input(5);
        let before = model.forward_attributes(&x);
        model.attach_regressor(13);
        let len = model.params().len();
        model.attach_regressor(13);
        assert_eq!(model.params().len(), len);
        assert_eq!(model.forward_attributes(&x), before);
    }
}
