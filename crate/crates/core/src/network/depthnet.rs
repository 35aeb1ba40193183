use burn::module::Module;
use burn::tensor::{backend::Backend, Tensor};
use serde::{Deserialize, Serialize};

use super::decoder::FusionDecoder;
use super::encoder::{Encoder, EncoderKind, PYRAMID_LEVELS};
use crate::error::{ensure, Result};
use crate::evaluation::complexity::{FeatureShape, Trace, Tracer};

/// ImageNet-style normalisation applied to `[0, 1]` inputs.
const INPUT_MEAN: f64 = 0.45;
const INPUT_STD: f64 = 0.225;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthNetConfig {
    pub encoder: EncoderKind,
    /// Unified decoder widths `C(1..=5)`; the encoder's default when absent.
    pub widths: Option<Vec<usize>>,
    pub num_scales: usize,
    /// Channel-attention reduction ratio; 4 below 64 channels and 16 above when absent.
    pub attention_ratio: Option<usize>,
}

impl Default for DepthNetConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::EfficientnetB0Shape,
            widths: None,
            num_scales: 4,
            attention_ratio: None,
        }
    }
}

impl DepthNetConfig {
    pub fn tiny() -> Self {
        Self {
            encoder: EncoderKind::Tiny,
            ..Self::default()
        }
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        self.widths
            .clone()
            .unwrap_or_else(|| self.encoder.decoder_widths())
    }

    pub fn init<B: Backend>(&self, device: &B::Device) -> Result<DepthNet<B>> {
        if let Some(r) = self.attention_ratio {
            ensure!(r >= 1, "attention_ratio must be at least 1");
        }
        let encoder = self.encoder.init(device);
        let decoder = FusionDecoder::new(
            encoder.widths(),
            &self.decoder_widths(),
            self.num_scales,
            self.attention_ratio,
            device,
        )?;
        Ok(DepthNet { encoder, decoder })
    }
}

#[derive(Module, Debug)]
pub struct DepthNet<B: Backend> {
    pub encoder: Encoder<B>,
    pub decoder: FusionDecoder<B>,
}

impl<B: Backend> DepthNet<B> {
    /// Side lengths must be multiples of this.
    pub const DIVISOR: usize = 1 << PYRAMID_LEVELS;

    /// Disparities in (0, 1) for `[N, 3, H, W]` images in `[0, 1]`, finest first: scale `s`
    /// has shape `[N, 1, H / 2^s, W / 2^s]`.
    pub fn forward(&self, image: Tensor<B, 4>) -> Result<Vec<Tensor<B, 4>>> {
        let [_, c, h, w] = image.dims();
        ensure!(c == 3, "expected 3 input channels, got {c}");
        ensure!(
            h % Self::DIVISOR == 0 && w % Self::DIVISOR == 0 && h > 0 && w > 0,
            "image size {w}x{h} must be divisible by {}",
            Self::DIVISOR
        );
        let x = image.sub_scalar(INPUT_MEAN).div_scalar(INPUT_STD);
        self.decoder.forward(self.encoder.forward(x))
    }

    pub fn num_scales(&self) -> usize {
        self.decoder.num_scales()
    }
}

impl<B: Backend> Trace for DepthNet<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        t.elementwise("input.normalize", input, 1);
        t.scoped("encoder", |t| self.encoder.trace(input, t));
        let pyramid: Vec<FeatureShape> = (1..=PYRAMID_LEVELS)
            .zip(self.encoder.widths())
            .map(|(i, &c)| [c, input[1] >> i, input[2] >> i])
            .collect();
        t.scoped("decoder", |t| self.decoder.trace_pyramid(&pyramid, t));
        [1, input[1], input[2]]
    }
}
