//! Multi-scale view-synthesis objective.

use burn::tensor::module::avg_pool2d;
use burn::tensor::{backend::Backend, Tensor};

use super::{disp_to_depth_tensor, TrainConfig};
use crate::error::{ensure, Result};
use crate::geometry::{backproject, project, warp, Intrinsics, PixelGrid, RigidTransform};
use crate::losses::{
    edge_aware_smoothness, min_reprojection, min_reprojection_automasked, photometric_error,
    LossConfig, MinReprojection,
};
use crate::tensor_util;

/// Batched frames and per-sample intrinsics.
#[derive(Debug, Clone)]
pub struct FrameBatch<B: Backend> {
    /// `[N, 3, H, W]` target frame.
    pub target: Tensor<B, 4>,
    /// Source frames `t-1` and `t+1`, each `[N, 3, H, W]`.
    pub sources: Vec<Tensor<B, 4>>,
    pub intrinsics: Vec<Intrinsics>,
}

impl<B: Backend> FrameBatch<B> {
    pub fn batch_size(&self) -> usize {
        self.target.dims()[0]
    }

    fn k_tensors(&self, scale: usize) -> Result<(Tensor<B, 3>, Tensor<B, 3>)> {
        let device = self.target.device();
        let mut ks = Vec::with_capacity(self.intrinsics.len());
        let mut inv = Vec::with_capacity(self.intrinsics.len());
        for k in &self.intrinsics {
            let k = k.scale(1, 1 << scale)?;
            ks.push(k.to_tensor::<B>(1, &device));
            inv.push(k.inverse_tensor::<B>(1, &device));
        }
        Ok((Tensor::cat(ks, 0), Tensor::cat(inv, 0)))
    }
}

/// Photometric reprojection of a target from its sources given depth and motions.
///
/// `depth` is `[N, 1, h, w]` where `(h, w)` is the frame size divided by `2^scale`; frames and
/// intrinsics are downscaled to match. `transforms[i]` maps target-camera points into source `i`.
pub fn reprojection<B: Backend>(
    batch: &FrameBatch<B>,
    depth: Tensor<B, 4>,
    transforms: &[RigidTransform<B>],
    scale: usize,
    cfg: &LossConfig,
) -> Result<MinReprojection<B>> {
    ensure!(
        transforms.len() == batch.sources.len(),
        "{} transforms for {} source frames",
        transforms.len(),
        batch.sources.len()
    );
    ensure!(
        batch.intrinsics.len() == batch.batch_size(),
        "{} intrinsics for a batch of {}",
        batch.intrinsics.len(),
        batch.batch_size()
    );
    let [_, _, h, w] = depth.dims();
    let (k, inv_k) = batch.k_tensors(scale)?;
    let target = downsample(batch.target.clone(), scale);
    let points = backproject(depth, inv_k, &PixelGrid::new(h, w))?;
    let mut errors = Vec::with_capacity(transforms.len());
    let mut masks = Vec::with_capacity(transforms.len());
    let mut identity = Vec::new();
    for (source, transform) in batch.sources.iter().zip(transforms) {
        let source = downsample(source.clone(), scale);
        let projection = project(points.clone(), transform, k.clone(), h, w)?;
        let synth = warp(source.clone(), &projection)?;
        errors.push(photometric_error(target.clone(), synth.image, cfg)?);
        masks.push(synth.mask);
        if cfg.automask {
            identity.push(photometric_error(target.clone(), source, cfg)?);
        }
    }
    if cfg.automask {
        min_reprojection_automasked(&errors, &masks, &identity)
    } else {
        min_reprojection(&errors, &masks)
    }
}

/// Box-filter downsampling by `2^scale`.
pub fn downsample<B: Backend>(x: Tensor<B, 4>, scale: usize) -> Tensor<B, 4> {
    if scale == 0 {
        return x;
    }
    let f = 1 << scale;
    avg_pool2d(x, [f, f], [f, f], [0, 0], true)
}

/// Bilinear resize with half-pixel centres and edge clamping.
///
/// Written as `A_h · x · A_wᵀ` with fixed interpolation matrices so it stays differentiable on
/// every backend.
pub fn upsample_bilinear<B: Backend>(x: Tensor<B, 4>, height: usize, width: usize) -> Tensor<B, 4> {
    let [n, c, h, w] = x.dims();
    if (h, w) == (height, width) {
        return x;
    }
    let device = x.device();
    let a_h = interpolation_matrix::<B>(h, height, &device).expand([n, c, height, h]);
    let a_w_t = interpolation_matrix::<B>(w, width, &device)
        .swap_dims(2, 3)
        .expand([n, c, w, width]);
    a_h.matmul(x).matmul(a_w_t)
}

/// `[1, 1, to, from]` linear-interpolation weights.
fn interpolation_matrix<B: Backend>(from: usize, to: usize, device: &B::Device) -> Tensor<B, 4> {
    let mut m = vec![0.0f64; to * from];
    let ratio = from as f64 / to as f64;
    for i in 0..to {
        let src = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (from - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(from - 1);
        let frac = src - i0 as f64;
        m[i * from + i0] += 1.0 - frac;
        m[i * from + i1] += frac;
    }
    tensor_util::from_vec_f64(m, [1, 1, to, from], device)
}

/// Loss terms of one step. All scalars are `[1]` tensors.
#[derive(Debug, Clone)]
pub struct LossBreakdown<B: Backend> {
    pub total: Tensor<B, 1>,
    /// Mean over scales of the photometric term.
    pub photometric: Tensor<B, 1>,
    /// Mean over scales of the unweighted smoothness term.
    pub smoothness: Tensor<B, 1>,
    pub per_scale: Vec<Tensor<B, 1>>,
}

/// Multi-scale objective: per scale, reprojection (with min over sources) plus weighted
/// smoothness; the total is the mean over scales.
pub fn multiscale_loss<B: Backend>(
    batch: &FrameBatch<B>,
    disparities: &[Tensor<B, 4>],
    transforms: &[RigidTransform<B>],
    train: &TrainConfig,
    cfg: &LossConfig,
) -> Result<LossBreakdown<B>> {
    ensure!(!disparities.is_empty(), "no disparity scales");
    let [_, _, h, w] = batch.target.dims();
    let mut photo = Vec::new();
    let mut smooth = Vec::new();
    let mut per_scale = Vec::new();
    for (s, disp) in disparities.iter().enumerate() {
        let (disp_for_warp, warp_scale) = if train.upsample_disparities {
            (upsample_bilinear(disp.clone(), h, w), 0)
        } else {
            (disp.clone(), s)
        };
        let depth = disp_to_depth_tensor(disp_for_warp, train.min_depth, train.max_depth);
        let p = reprojection(batch, depth, transforms, warp_scale, cfg)?.mean();
        let sm = edge_aware_smoothness(disp.clone(), downsample(batch.target.clone(), s))?;
        let beta = if train.smoothness_decay {
            cfg.beta_smooth / (1u32 << s) as f64
        } else {
            cfg.beta_smooth
        };
        per_scale.push(p.clone() * cfg.lambda_re + sm.clone() * beta);
        photo.push(p);
        smooth.push(sm);
    }
    let mean = |v: Vec<Tensor<B, 1>>| Tensor::cat(v, 0).mean();
    Ok(LossBreakdown {
        total: mean(per_scale.clone()),
        photometric: mean(photo),
        smoothness: mean(smooth),
        per_scale,
    })
}
