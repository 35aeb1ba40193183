//! Feature-pyramid encoders: an EfficientNet-shaped backbone and a small plain CNN.
//!
//! Both return five maps at strides 2, 4, 8, 16 and 32.

use burn::module::{Ignored, Module};
use burn::tensor::{backend::Backend, Tensor};
use serde::{Deserialize, Serialize};

use super::blocks::{Activation, ChannelAttention, ConvNormAct};
use crate::evaluation::complexity::{FeatureShape, Trace, Tracer};

pub const PYRAMID_LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    #[serde(alias = "b0", alias = "efficientnet-b0")]
    EfficientnetB0Shape,
    #[serde(alias = "b1", alias = "efficientnet-b1")]
    EfficientnetB1Shape,
    Tiny,
}

impl EncoderKind {
    /// Default unified decoder widths for this backbone.
    pub fn decoder_widths(self) -> Vec<usize> {
        match self {
            EncoderKind::EfficientnetB0Shape | EncoderKind::EfficientnetB1Shape => {
                vec![16, 32, 64, 128, 256]
            }
            EncoderKind::Tiny => vec![8, 16, 32, 64, 128],
        }
    }

    pub fn init<B: Backend>(self, device: &B::Device) -> Encoder<B> {
        match self {
            EncoderKind::EfficientnetB0Shape => {
                Encoder::EfficientNet(EfficientNet::new(1.0, device))
            }
            EncoderKind::EfficientnetB1Shape => {
                Encoder::EfficientNet(EfficientNet::new(1.1, device))
            }
            EncoderKind::Tiny => Encoder::Tiny(TinyEncoder::new(&TINY_WIDTHS, device)),
        }
    }
}

/// `(expand ratio, kernel, stride, output channels, repeats)` for the seven B0 stages.
const B0_STAGES: [(usize, usize, usize, usize, usize); 7] = [
    (1, 3, 1, 16, 1),
    (6, 3, 2, 24, 2),
    (6, 5, 2, 40, 2),
    (6, 3, 2, 80, 3),
    (6, 5, 1, 112, 3),
    (6, 5, 2, 192, 4),
    (6, 3, 1, 320, 1),
];
/// Stages whose outputs form the pyramid (strides 2, 4, 8, 16, 32).
const B0_TAPS: [usize; 5] = [0, 1, 2, 4, 6];
const STEM_WIDTH: usize = 32;
const SE_RATIO: f64 = 0.25;

const TINY_WIDTHS: [usize; 5] = [8, 16, 24, 32, 48];

/// Inverted residual block with squeeze-and-excitation.
#[derive(Module, Debug)]
pub struct MbConv<B: Backend> {
    expand: Option<ConvNormAct<B>>,
    depthwise: ConvNormAct<B>,
    se: ChannelAttention<B>,
    project: ConvNormAct<B>,
    residual: bool,
}

impl<B: Backend> MbConv<B> {
    fn new(
        input: usize,
        output: usize,
        expand_ratio: usize,
        kernel: usize,
        stride: usize,
        device: &B::Device,
    ) -> Self {
        let hidden = input * expand_ratio;
        let squeezed = ((input as f64 * SE_RATIO) as usize).max(1);
        Self {
            expand: (expand_ratio != 1)
                .then(|| ConvNormAct::new([input, hidden], 1, 1, 1, Activation::Silu, device)),
            depthwise: ConvNormAct::new(
                [hidden, hidden],
                kernel,
                stride,
                hidden,
                Activation::Silu,
                device,
            ),
            se: ChannelAttention::new(hidden, squeezed, Activation::Silu, device),
            project: ConvNormAct::new([hidden, output], 1, 1, 1, Activation::Identity, device),
            residual: stride == 1 && input == output,
        }
    }

    fn forward(&self, x: Tensor<B, 4>) -> Tensor<B, 4> {
        let mut h = match &self.expand {
            Some(expand) => expand.forward(x.clone()),
            None => x.clone(),
        };
        h = self.depthwise.forward(h);
        h = self.se.forward(h);
        h = self.project.forward(h);
        if self.residual {
            h + x
        } else {
            h
        }
    }
}

impl<B: Backend> Trace for MbConv<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        let mut x = input;
        if let Some(expand) = &self.expand {
            x = t.scoped("expand", |t| expand.trace(x, t));
        }
        x = t.scoped("depthwise", |t| self.depthwise.trace(x, t));
        x = t.scoped("se", |t| self.se.trace(x, t));
        x = t.scoped("project", |t| self.project.trace(x, t));
        if self.residual {
            t.elementwise("residual", x, 1);
        }
        x
    }
}

/// EfficientNet trunk (stem plus MBConv stages, no classification head), random init.
#[derive(Module, Debug)]
pub struct EfficientNet<B: Backend> {
    stem: ConvNormAct<B>,
    blocks: Vec<MbConv<B>>,
    /// Block indices after which a pyramid level is emitted.
    taps: Ignored<Vec<usize>>,
    widths: Ignored<Vec<usize>>,
}

impl<B: Backend> EfficientNet<B> {
    /// `depth_multiplier` scales the per-stage repeat counts (1.0 for B0, 1.1 for B1).
    pub fn new(depth_multiplier: f64, device: &B::Device) -> Self {
        let stem = ConvNormAct::new([3, STEM_WIDTH], 3, 2, 1, Activation::Silu, device);
        let mut blocks = Vec::new();
        let mut taps = Vec::new();
        let mut widths = Vec::new();
        let mut input = STEM_WIDTH;
        for (stage, &(expand, kernel, stride, output, repeats)) in B0_STAGES.iter().enumerate() {
            let repeats = (repeats as f64 * depth_multiplier).ceil() as usize;
            for r in 0..repeats {
                let s = if r == 0 { stride } else { 1 };
                blocks.push(MbConv::new(input, output, expand, kernel, s, device));
                input = output;
            }
            if B0_TAPS.contains(&stage) {
                taps.push(blocks.len() - 1);
                widths.push(output);
            }
        }
        Self {
            stem,
            blocks,
            taps: Ignored(taps),
            widths: Ignored(widths),
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn forward(&self, x: Tensor<B, 4>) -> Vec<Tensor<B, 4>> {
        let mut x = self.stem.forward(x);
        let mut pyramid = Vec::with_capacity(PYRAMID_LEVELS);
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(x);
            if self.taps.0.contains(&i) {
                pyramid.push(x.clone());
            }
        }
        pyramid
    }
}

impl<B: Backend> Trace for EfficientNet<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        let mut x = t.scoped("stem", |t| self.stem.trace(input, t));
        for (i, block) in self.blocks.iter().enumerate() {
            x = t.scoped(format!("block{i}"), |t| block.trace(x, t));
        }
        x
    }
}

#[derive(Module, Debug)]
pub struct TinyStage<B: Backend> {
    down: ConvNormAct<B>,
    refine: ConvNormAct<B>,
}

/// Five stages of stride-2 conv followed by a stride-1 conv, each with BN and ELU.
#[derive(Module, Debug)]
pub struct TinyEncoder<B: Backend> {
    stages: Vec<TinyStage<B>>,
    widths: Ignored<Vec<usize>>,
}

impl<B: Backend> TinyEncoder<B> {
    pub fn new(widths: &[usize], device: &B::Device) -> Self {
        let mut input = 3;
        let stages = widths
            .iter()
            .map(|&w| {
                let stage = TinyStage {
                    down: ConvNormAct::new([input, w], 3, 2, 1, Activation::Elu, device),
                    refine: ConvNormAct::new([w, w], 3, 1, 1, Activation::Elu, device),
                };
                input = w;
                stage
            })
            .collect();
        Self {
            stages,
            widths: Ignored(widths.to_vec()),
        }
    }

    fn forward(&self, mut x: Tensor<B, 4>) -> Vec<Tensor<B, 4>> {
        self.stages
            .iter()
            .map(|stage| {
                x = stage.refine.forward(stage.down.forward(x.clone()));
                x.clone()
            })
            .collect()
    }
}

impl<B: Backend> Trace for TinyEncoder<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        let mut x = input;
        for (i, stage) in self.stages.iter().enumerate() {
            x = t.scoped(format!("stage{i}"), |t| {
                let x = t.scoped("down", |t| stage.down.trace(x, t));
                t.scoped("refine", |t| stage.refine.trace(x, t))
            });
        }
        x
    }
}

#[derive(Module, Debug)]
pub enum Encoder<B: Backend> {
    EfficientNet(EfficientNet<B>),
    Tiny(TinyEncoder<B>),
}

impl<B: Backend> Encoder<B> {
    /// Channel count of each pyramid level, finest first.
    pub fn widths(&self) -> &[usize] {
        match self {
            Encoder::EfficientNet(e) => &e.widths.0,
            Encoder::Tiny(e) => &e.widths.0,
        }
    }

    /// Pyramid of [`PYRAMID_LEVELS`] maps, level `i` (from 1) at stride `2^i`.
    pub fn forward(&self, x: Tensor<B, 4>) -> Vec<Tensor<B, 4>> {
        match self {
            Encoder::EfficientNet(e) => e.forward(x),
            Encoder::Tiny(e) => e.forward(x),
        }
    }
}

impl<B: Backend> Trace for Encoder<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        match self {
            Encoder::EfficientNet(e) => e.trace(input, t),
            Encoder::Tiny(e) => e.trace(input, t),
        }
    }
}
