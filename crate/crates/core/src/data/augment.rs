//! Training-time augmentation.
//!
//! Colour jitter changes only the network inputs; the photometric loss compares against the
//! unjittered frames. Horizontal flips apply to both and mirror the principal point.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FrameTriplet, RgbImage};
use crate::geometry::Intrinsics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub color_jitter: bool,
    pub flip: bool,
    /// Jitter factors are drawn from `[1 - x, 1 + x]`.
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            color_jitter: true,
            flip: true,
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            color_jitter: false,
            flip: false,
            ..Self::default()
        }
    }
}

/// A triplet ready for training: `inputs` feed the networks, `targets` feed the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub inputs: [RgbImage; 3],
    pub targets: [RgbImage; 3],
    pub intrinsics: Intrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorJitter {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
}

impl ColorJitter {
    pub fn sample(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let mut draw = |x: f32| {
            if x > 0.0 {
                rng.gen_range(1.0 - x..=1.0 + x)
            } else {
                1.0
            }
        };
        Self {
            brightness: draw(cfg.brightness),
            contrast: draw(cfg.contrast),
            saturation: draw(cfg.saturation),
        }
    }

    pub fn apply(&self, img: &RgbImage) -> RgbImage {
        let luma = |p: [f32; 3]| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        let n = (img.width * img.height) as f32;
        let mean = (0..img.height)
            .flat_map(|v| (0..img.width).map(move |u| (u, v)))
            .map(|(u, v)| luma(img.pixel(u, v)) * self.brightness)
            .sum::<f32>()
            / n;
        RgbImage::from_fn(img.width, img.height, |u, v| {
            let p = img.pixel(u, v).map(|x| x * self.brightness);
            let p = p.map(|x| (x - mean) * self.contrast + mean);
            let g = luma(p);
            p.map(|x| (g + (x - g) * self.saturation).clamp(0.0, 1.0))
        })
    }
}

/// Draws flip and jitter decisions from `rng` in a fixed order.
pub fn augment(triplet: &FrameTriplet, cfg: &AugmentConfig, rng: &mut impl Rng) -> TrainingSample {
    let flip = cfg.flip && rng.gen_bool(0.5);
    let jitter = (cfg.color_jitter && rng.gen_bool(0.5)).then(|| ColorJitter::sample(cfg, rng));
    let targets = triplet
        .frames
        .clone()
        .map(|f| if flip { f.flip_horizontal() } else { f });
    let inputs = match jitter {
        Some(j) => targets.clone().map(|f| j.apply(&f)),
        None => targets.clone(),
    };
    let intrinsics = if flip {
        triplet.intrinsics.flipped_horizontally()
    } else {
        triplet.intrinsics
    };
    TrainingSample {
        inputs,
        targets,
        intrinsics,
    }
}

impl TrainingSample {
    pub fn plain(triplet: &FrameTriplet) -> Self {
        Self {
            inputs: triplet.frames.clone(),
            targets: triplet.frames.clone(),
            intrinsics: triplet.intrinsics,
        }
    }
}
