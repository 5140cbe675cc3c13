//! Layer assemblies shared by the five models: convolution layers with
//! He-style initialization, residual blocks, the UNet generator, the
//! PatchGAN discriminator, and dense heads.
//!
//! Every block exposes `collect_params`, which registers its parameters under
//! stable dot-separated names; checkpoints key on those names.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{Activation, Real, Result, Tensor, TensorError};

/// Kernel entries ~ N(0, 2/fan_in); biases zero.
pub fn he_normal<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64(z * std)
        })
        .collect();
    Tensor::param(data, shape).expect("shape/len agree by construction")
}

pub struct Conv2dLayer<T: Real = f32> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
    pub activation: Option<Activation>,
}

impl<T: Real> Conv2dLayer<T> {
    pub fn new(
        rng: &mut ChaCha8Rng,
        cin: usize,
        cout: usize,
        ksize: usize,
        stride: usize,
        padding: usize,
        activation: Option<Activation>,
    ) -> Self {
        let fan_in = cin * ksize * ksize;
        Conv2dLayer {
            kernel: he_normal(rng, &[cout, cin, ksize, ksize], fan_in),
            bias: Tensor::param(vec![T::zero(); cout], &[cout]).unwrap(),
            stride,
            padding,
            activation,
        }
    }

    /// 3x3-style shape-preserving layer (odd kernel, stride 1).
    pub fn same(
        rng: &mut ChaCha8Rng,
        cin: usize,
        cout: usize,
        ksize: usize,
        activation: Option<Activation>,
    ) -> Self {
        Self::new(rng, cin, cout, ksize, 1, (ksize - 1) / 2, activation)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = x.conv2d(&self.kernel, Some(&self.bias), self.stride, self.padding)?;
        match self.activation {
            Some(a) => y.activation(a),
            None => Ok(y),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.kernel"), self.kernel.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

pub struct Dense<T: Real = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Option<Activation>,
}

impl<T: Real> Dense<T> {
    pub fn new(
        rng: &mut ChaCha8Rng,
        fan_in: usize,
        fan_out: usize,
        activation: Option<Activation>,
    ) -> Self {
        Dense {
            weight: he_normal(rng, &[fan_out, fan_in], fan_in),
            bias: Tensor::param(vec![T::zero(); fan_out], &[fan_out]).unwrap(),
            activation,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = x.linear(&self.weight, &self.bias)?;
        match self.activation {
            Some(a) => y.activation(a),
            None => Ok(y),
        }
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

/// Two 3x3 same-padded convolutions with an additive shortcut. A 1x1
/// projection is inserted when channel counts or stride differ.
pub struct ResidualBlock<T: Real = f32> {
    pub conv1: Conv2dLayer<T>,
    pub conv2: Conv2dLayer<T>,
    pub proj: Option<Conv2dLayer<T>>,
}

impl<T: Real> ResidualBlock<T> {
    pub fn new(rng: &mut ChaCha8Rng, cin: usize, cout: usize, stride: usize) -> Self {
        let conv1 = Conv2dLayer::new(rng, cin, cout, 3, stride, 1, Some(Activation::Relu));
        let conv2 = Conv2dLayer::same(rng, cout, cout, 3, None);
        let proj = if cin != cout || stride != 1 {
            Some(Conv2dLayer::new(rng, cin, cout, 1, stride, 0, None))
        } else {
            None
        };
        ResidualBlock { conv1, conv2, proj }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.conv2.forward(&self.conv1.forward(x)?)?;
        let shortcut = match &self.proj {
            Some(p) => p.forward(x)?,
            None => x.clone(),
        };
        y.add(&shortcut)?.relu()
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.conv1.collect_params(&format!("{prefix}.conv1"), out);
        self.conv2.collect_params(&format!("{prefix}.conv2"), out);
        if let Some(p) = &self.proj {
            p.collect_params(&format!("{prefix}.proj"), out);
        }
    }
}

/// Residual stack + global average pooling + dense head. The detector uses a
/// 1-unit sigmoid head; the Siamese branches use a d-dimensional linear head.
pub struct ResidualEncoder<T: Real = f32> {
    pub stem: Conv2dLayer<T>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub head: Dense<T>,
    pub input_size: usize,
}

impl<T: Real> ResidualEncoder<T> {
    /// `widths` sets per-block channel counts; each block halves the spatial
    /// resolution until it reaches 4x4.
    pub fn new(
        rng: &mut ChaCha8Rng,
        input_size: usize,
        widths: &[usize],
        out_dim: usize,
        head_activation: Option<Activation>,
    ) -> Self {
        assert!(!widths.is_empty());
        let stem = Conv2dLayer::same(rng, 3, widths[0], 3, Some(Activation::Relu));
        let mut blocks = Vec::new();
        let mut cin = widths[0];
        let mut spatial = input_size;
        for &w in widths {
            let stride = if spatial >= 8 { 2 } else { 1 };
            blocks.push(ResidualBlock::new(rng, cin, w, stride));
            cin = w;
            spatial /= stride;
        }
        let head = Dense::new(rng, cin, out_dim, head_activation);
        ResidualEncoder {
            stem,
            blocks,
            head,
            input_size,
        }
    }

    /// [B,3,H,W] -> [B,out_dim].
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 || s[2] != self.input_size || s[3] != self.input_size {
            return Err(TensorError::InvalidArg {
                op: "residual_encoder",
                msg: format!(
                    "expected [B,3,{0},{0}], got {1:?}",
                    self.input_size, s
                ),
            });
        }
        let mut y = self.stem.forward(x)?;
        for b in &self.blocks {
            y = b.forward(&y)?;
        }
        self.head.forward(&y.global_avg_pool()?)
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.stem.collect_params(&format!("{prefix}.stem"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.collect_params(&format!("{prefix}.block{i}"), out);
        }
        self.head.collect_params(&format!("{prefix}.head"), out);
    }
}

/// Encoder-decoder with skip connections. Decoding upsamples by
/// nearest-neighbor and convolves; the input itself feeds the last decoder
/// stage so the network can learn near-identity refinements.
pub struct UNetGenerator<T: Real = f32> {
    pub depth: usize,
    pub encoder: Vec<Conv2dLayer<T>>,
    pub decoder: Vec<Conv2dLayer<T>>,
    pub final_conv: Conv2dLayer<T>,
}

impl<T: Real> UNetGenerator<T> {
    pub fn new(rng: &mut ChaCha8Rng, depth: usize, base_width: usize) -> Self {
        assert!(depth >= 1);
        let mut encoder = Vec::new();
        let mut cin = 3;
        let mut widths = Vec::new();
        for d in 0..depth {
            let w = base_width << d;
            encoder.push(Conv2dLayer::new(rng, cin, w, 3, 2, 1, Some(Activation::Relu)));
            widths.push(w);
            cin = w;
        }
        // decoder[i] consumes up(prev) ⊕ skip
        let mut decoder = Vec::new();
        for d in (0..depth).rev() {
            let skip = if d == 0 { 3 } else { widths[d - 1] };
            let out = if d == 0 { base_width } else { widths[d - 1] };
            decoder.push(Conv2dLayer::same(
                rng,
                widths[d] + skip,
                out,
                3,
                Some(Activation::Relu),
            ));
        }
        let final_conv = Conv2dLayer::same(rng, base_width, 3, 3, None);
        UNetGenerator {
            depth,
            encoder,
            decoder,
            final_conv,
        }
    }

    /// [B,3,H,W] -> [B,3,H,W] in (0,1). H and W must be divisible by 2^depth.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(TensorError::InvalidArg {
                op: "unet_forward",
                msg: format!("expected [B,3,H,W], got {s:?}"),
            });
        }
        let div = 1 << self.depth;
        if s[2] % div != 0 || s[3] % div != 0 {
            return Err(TensorError::InvalidArg {
                op: "unet_forward",
                msg: format!("spatial {}x{} not divisible by {div}", s[2], s[3]),
            });
        }
        let mut skips: Vec<Tensor<T>> = vec![x.clone()];
        let mut y = x.clone();
        for enc in &self.encoder {
            y = enc.forward(&y)?;
            skips.push(y.clone());
        }
        skips.pop(); // bottleneck is not its own skip
        for dec in &self.decoder {
            let up = y.upsample_nearest2()?;
            let skip = skips.pop().expect("one skip per decoder stage");
            y = dec.forward(&Tensor::concat_channels(&[&up, &skip])?)?;
        }
        self.final_conv.forward(&y)?.sigmoid()
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (i, e) in self.encoder.iter().enumerate() {
            e.collect_params(&format!("{prefix}.enc{i}"), out);
        }
        for (i, d) in self.decoder.iter().enumerate() {
            d.collect_params(&format!("{prefix}.dec{i}"), out);
        }
        self.final_conv
            .collect_params(&format!("{prefix}.final"), out);
    }
}

/// Stride-2 convolution stack ending in a 1-channel sigmoid patch map.
pub struct PatchGanDiscriminator<T: Real = f32> {
    pub layers: Vec<Conv2dLayer<T>>,
    pub final_conv: Conv2dLayer<T>,
}

impl<T: Real> PatchGanDiscriminator<T> {
    /// `in_channels` is 6 for the conditional pair (candidate ⊕ condition).
    pub fn new(rng: &mut ChaCha8Rng, in_channels: usize, widths: &[usize]) -> Self {
        let mut layers = Vec::new();
        let mut cin = in_channels;
        for &w in widths {
            layers.push(Conv2dLayer::new(rng, cin, w, 3, 2, 1, Some(Activation::Relu)));
            cin = w;
        }
        let final_conv = Conv2dLayer::same(rng, cin, 1, 3, None);
        PatchGanDiscriminator { layers, final_conv }
    }

    /// [B,C,H,W] -> [B,1,h,w] of per-patch probabilities.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = x.clone();
        for l in &self.layers {
            y = l.forward(&y)?;
        }
        self.final_conv.forward(&y)?.sigmoid()
    }

    /// Conditional form: candidate frame and condition concatenated on the
    /// channel axis.
    pub fn forward_pair(&self, frame: &Tensor<T>, condition: &Tensor<T>) -> Result<Tensor<T>> {
        crate::tensor::Tensor::concat_channels(&[frame, condition])
            .and_then(|x| self.forward(&x))
    }

    pub fn collect_params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.collect_params(&format!("{prefix}.layer{i}"), out);
        }
        self.final_conv
            .collect_params(&format!("{prefix}.final"), out);
    }
}

/// Checkpoint contract: parameter names must be unique.
pub fn check_name_collisions<T: Real>(params: &[(String, Tensor<T>)]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for (name, _) in params {
        if !seen.insert(name.as_str()) {
            return Err(TensorError::InvalidArg {
                op: "param_registry",
                msg: format!("duplicate parameter name {name}"),
            });
        }
    }
    Ok(())
}
