//! Building blocks shared by the encoders, the fusion decoder and the pose regressor.

use burn::module::{Ignored, Module};
use burn::nn::conv::{Conv2d, Conv2dConfig};
use burn::nn::{BatchNorm, BatchNormConfig, Initializer, Linear, LinearConfig, PaddingConfig2d};
use burn::tensor::activation::{relu, sigmoid, silu};
use burn::tensor::{backend::Backend, Tensor};
use serde::{Deserialize, Serialize};

use crate::evaluation::complexity::{FeatureShape, Trace, Tracer};

pub fn elu<B: Backend, const D: usize>(x: Tensor<B, D>) -> Tensor<B, D> {
    x.clone().clamp_min(0.0) + x.clamp_max(0.0).exp().sub_scalar(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Elu,
    Silu,
}

impl Activation {
    pub fn apply<B: Backend, const D: usize>(self, x: Tensor<B, D>) -> Tensor<B, D> {
        match self {
            Activation::Identity => x,
            Activation::Relu => relu(x),
            Activation::Elu => elu(x),
            Activation::Silu => silu(x),
        }
    }

    fn trace(self, name: &str, shape: FeatureShape, tracer: &mut Tracer) {
        if self != Activation::Identity {
            tracer.elementwise(name, shape, 1);
        }
    }
}

/// Nearest-neighbour ×2 upsampling of the two trailing dimensions.
pub fn upsample2x<B: Backend>(x: Tensor<B, 4>) -> Tensor<B, 4> {
    let [n, c, h, w] = x.dims();
    x.reshape([n, c, h, 1, w, 1])
        .expand([n, c, h, 2, w, 2])
        .reshape([n, c, 2 * h, 2 * w])
}

pub(crate) fn conv<B: Backend>(
    channels: [usize; 2],
    kernel: usize,
    stride: usize,
    groups: usize,
    bias: bool,
    device: &B::Device,
) -> Conv2d<B> {
    Conv2dConfig::new(channels, [kernel, kernel])
        .with_stride([stride, stride])
        .with_padding(PaddingConfig2d::Explicit(kernel / 2, kernel / 2))
        .with_groups(groups)
        .with_bias(bias)
        .init(device)
}

/// Applies `conv`. Dense convolutions are lowered to im2col and a batched matmul and
/// depthwise ones to a sum of shifted windows; both have a far cheaper backward pass on the
/// CPU backend than the direct kernel. Other grouped convolutions use the backend kernel.
pub fn conv_forward<B: Backend>(conv: &Conv2d<B>, x: Tensor<B, 4>) -> Tensor<B, 4> {
    let (ph, pw) = match &conv.padding.0 {
        PaddingConfig2d::Explicit(ph, pw) => (*ph, *pw),
        PaddingConfig2d::Valid => (0, 0),
        PaddingConfig2d::Same => return conv.forward(x),
    };
    let [c_out, c_in, kh, kw] = conv.weight.dims();
    let [n, c, h, w] = x.dims();
    let depthwise = conv.groups == c && c_in == 1 && c_out == c;
    if (conv.groups != 1 && !depthwise) || conv.dilation != [1, 1] {
        return conv.forward(x);
    }
    assert_eq!(
        c,
        c_in * conv.groups,
        "convolution expects {} channels, got {c}",
        c_in * conv.groups
    );
    let [sh, sw] = conv.stride;
    let ho = (h + 2 * ph - kh) / sh + 1;
    let wo = (w + 2 * pw - kw) / sw + 1;
    let out = if (kh, kw, sh, sw, ph, pw) == (1, 1, 1, 1, 0, 0) && !depthwise {
        let weight = conv
            .weight
            .val()
            .reshape([1, c_out, c_in])
            .expand([n, c_out, c_in]);
        weight
            .matmul(x.reshape([n, c, h * w]))
            .reshape([n, c_out, ho, wo])
    } else {
        let patches = shifted_windows(x, [kh, kw], [sh, sw], [ph, pw], [ho, wo]);
        if depthwise {
            // Per-channel taps: a weighted sum of the shifted windows.
            let weight = conv.weight.val().reshape([c, kh * kw]);
            patches
                .into_iter()
                .enumerate()
                .map(|(i, p)| p * weight.clone().slice([0..c, i..i + 1]).reshape([1, c, 1, 1]))
                .reduce(|a, b| a + b)
                .expect("kernel has at least one tap")
        } else {
            let k = c_in * kh * kw;
            let cols = Tensor::stack::<5>(patches, 2).reshape([n, k, ho * wo]);
            let weight = conv
                .weight
                .val()
                .reshape([1, c_out, k])
                .expand([n, c_out, k]);
            weight.matmul(cols).reshape([n, c_out, ho, wo])
        }
    };
    match &conv.bias {
        Some(bias) => out + bias.val().reshape([1, c_out, 1, 1]),
        None => out,
    }
}

/// The `kh·kw` strided windows of a zero-padded `x`, each `[N, C, ho, wo]`, row-major over taps.
fn shifted_windows<B: Backend>(
    x: Tensor<B, 4>,
    [kh, kw]: [usize; 2],
    [sh, sw]: [usize; 2],
    [ph, pw]: [usize; 2],
    [ho, wo]: [usize; 2],
) -> Vec<Tensor<B, 4>> {
    let [n, c, h, w] = x.dims();
    // Room for every strided window, plus the padding.
    let hp = (kh - 1 + sh * ho).max(h + 2 * ph);
    let wp = (kw - 1 + sw * wo).max(w + 2 * pw);
    let padded = if (hp, wp) == (h, w) {
        x
    } else {
        Tensor::zeros([n, c, hp, wp], &x.device())
            .slice_assign([0..n, 0..c, ph..ph + h, pw..pw + w], x)
    };
    let mut patches = Vec::with_capacity(kh * kw);
    for dy in 0..kh {
        for dx in 0..kw {
            let p = padded
                .clone()
                .slice([0..n, 0..c, dy..dy + sh * ho, dx..dx + sw * wo]);
            let p = if (sh, sw) == (1, 1) {
                p
            } else {
                p.reshape([n, c, ho, sh, wo, sw])
                    .slice([0..n, 0..c, 0..ho, 0..1, 0..wo, 0..1])
                    .reshape([n, c, ho, wo])
            };
            patches.push(p);
        }
    }
    patches
}

/// Depthwise 3×3 convolution followed by a pointwise 1×1 convolution and an activation.
#[derive(Module, Debug)]
pub struct SeparableConv<B: Backend> {
    pub depthwise: Conv2d<B>,
    pub pointwise: Conv2d<B>,
    activation: Ignored<Activation>,
}

impl<B: Backend> SeparableConv<B> {
    pub fn new(
        input: usize,
        output: usize,
        stride: usize,
        activation: Activation,
        device: &B::Device,
    ) -> Self {
        Self {
            depthwise: conv([input, input], 3, stride, input, false, device),
            pointwise: conv([input, output], 1, 1, 1, true, device),
            activation: Ignored(activation),
        }
    }

    pub fn forward(&self, x: Tensor<B, 4>) -> Tensor<B, 4> {
        let x = conv_forward(&self.pointwise, conv_forward(&self.depthwise, x));
        self.activation.0.apply(x)
    }
}

impl<B: Backend> Trace for SeparableConv<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        let x = t.conv("depthwise", &self.depthwise, input);
        let x = t.conv("pointwise", &self.pointwise, x);
        self.activation.0.trace("act", x, t);
        x
    }
}

/// Dense 3×3 convolution with ELU.
#[derive(Module, Debug)]
pub struct ConvBlock<B: Backend> {
    pub conv: Conv2d<B>,
}

impl<B: Backend> ConvBlock<B> {
    pub fn new(input: usize, output: usize, device: &B::Device) -> Self {
        Self {
            conv: conv([input, output], 3, 1, 1, true, device),
        }
    }

    pub fn forward(&self, x: Tensor<B, 4>) -> Tensor<B, 4> {
        elu(conv_forward(&self.conv, x))
    }
}

impl<B: Backend> Trace for ConvBlock<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        let x = t.conv("conv", &self.conv, input);
        t.elementwise("act", x, 1)
    }
}

/// Convolution, batch normalisation and activation.
#[derive(Module, Debug)]
pub struct ConvNormAct<B: Backend> {
    pub conv: Conv2d<B>,
    pub norm: BatchNorm<B, 2>,
    activation: Ignored<Activation>,
}

impl<B: Backend> ConvNormAct<B> {
    pub fn new(
        channels: [usize; 2],
        kernel: usize,
        stride: usize,
        groups: usize,
        activation: Activation,
        device: &B::Device,
    ) -> Self {
        Self {
            conv: conv(channels, kernel, stride, groups, false, device),
            norm: BatchNormConfig::new(channels[1]).init(device),
            activation: Ignored(activation),
        }
    }

    pub fn forward(&self, x: Tensor<B, 4>) -> Tensor<B, 4> {
        self.activation
            .0
            .apply(self.norm.forward(conv_forward(&self.conv, x)))
    }
}

impl<B: Backend> Trace for ConvNormAct<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        let x = t.conv("conv", &self.conv, input);
        let x = t.batch_norm("norm", &self.norm, x);
        self.activation.0.trace("act", x, t);
        x
    }
}

/// Squeeze-and-excitation gate: global pool, bottleneck, expansion and a sigmoid per channel.
#[derive(Module, Debug)]
pub struct ChannelAttention<B: Backend> {
    pub squeeze: Linear<B>,
    pub excite: Linear<B>,
    activation: Ignored<Activation>,
}

impl<B: Backend> ChannelAttention<B> {
    pub fn new(channels: usize, hidden: usize, activation: Activation, device: &B::Device) -> Self {
        assert!(
            channels >= 1 && hidden >= 1,
            "channel attention needs at least one channel"
        );
        Self {
            squeeze: LinearConfig::new(channels, hidden).init(device),
            excite: LinearConfig::new(hidden, channels).init(device),
            activation: Ignored(activation),
        }
    }

    /// Bottleneck width for a decoder feature of `channels` channels: ratio 4 below 64
    /// channels, 16 otherwise, never below one.
    pub fn decoder_hidden(channels: usize, ratio: Option<usize>) -> usize {
        let r = ratio.unwrap_or(if channels < 64 { 4 } else { 16 });
        (channels / r.max(1)).max(1)
    }

    /// Per-channel gates in (0, 1), shape `[N, C]`.
    pub fn gates(&self, x: Tensor<B, 4>) -> Tensor<B, 2> {
        let [n, c, _, _] = x.dims();
        let pooled = x.mean_dim(3).mean_dim(2).reshape([n, c]);
        let hidden = self.activation.0.apply(self.squeeze.forward(pooled));
        sigmoid(self.excite.forward(hidden))
    }

    pub fn forward(&self, x: Tensor<B, 4>) -> Tensor<B, 4> {
        let [n, c, _, _] = x.dims();
        let gates = self.gates(x.clone()).reshape([n, c, 1, 1]);
        x * gates
    }
}

impl<B: Backend> Trace for ChannelAttention<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        let pooled = t.global_pool("pool", input);
        let hidden = t.linear("squeeze", &self.squeeze, pooled);
        self.activation.0.trace("act", hidden, t);
        let gates = t.linear("excite", &self.excite, hidden);
        t.elementwise("sigmoid", gates, 1);
        t.elementwise("scale", input, 1)
    }
}

/// Initializer with a tiny spread, used for regressor outputs that should start near zero.
pub(crate) fn small_init() -> Initializer {
    Initializer::Uniform {
        min: -1e-3,
        max: 1e-3,
    }
}
