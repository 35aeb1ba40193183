//! Joint depth/pose training against the view-synthesis objective.

pub mod objective;
pub mod trainer;

use burn::tensor::{backend::Backend, Tensor};
use serde::{Deserialize, Serialize};

pub use objective::{multiscale_loss, reprojection, FrameBatch, LossBreakdown};
pub use trainer::{
    read_metrics, FitReport, LossStats, StepStats, Trainer, CHECKPOINT_DIR, LAST_CHECKPOINT,
    METRICS_FILE,
};

use crate::error::{ensure, Result};
use crate::geometry::DepthMap;

/// Default factor applied to pose-regressor translations before use.
pub const TRANSLATION_SCALE: f64 = 0.01;
/// Default factor applied to pose-regressor axis-angle outputs before use.
pub const ROTATION_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Last epoch (1-based) trained at `lr_initial`.
    pub lr_drop_epoch: usize,
    pub lr_final: f64,
    pub adam_betas: (f32, f32),
    pub adam_epsilon: f32,
    pub num_scales: usize,
    pub min_depth: f64,
    pub max_depth: f64,
    pub seed: u64,
    /// Upsample every disparity to input resolution before warping; otherwise warp at the
    /// native scale with downsampled frames and intrinsics.
    pub upsample_disparities: bool,
    /// Weight the smoothness term of scale `s` by `beta / 2^s` instead of `beta`.
    pub smoothness_decay: bool,
    /// Stop after this many optimisation steps, regardless of `epochs`.
    pub max_steps: Option<usize>,
    /// Write a checkpoint after every epoch when a run directory is given.
    pub checkpoint_every_epoch: bool,
    /// Multipliers on the regressed axis-angle and translation before the Rodrigues map.
    pub rotation_scale: f64,
    pub translation_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            lr_initial: 1e-4,
            lr_drop_epoch: 35,
            lr_final: 1e-5,
            adam_betas: (0.9, 0.999),
            adam_epsilon: 1e-8,
            num_scales: 4,
            min_depth: 0.1,
            max_depth: 100.0,
            seed: 0,
            upsample_disparities: true,
            smoothness_decay: true,
            max_steps: None,
            checkpoint_every_epoch: true,
            rotation_scale: ROTATION_SCALE,
            translation_scale: TRANSLATION_SCALE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs must be at least 1");
        ensure!(self.batch_size >= 1, "batch_size must be at least 1");
        ensure!(
            self.lr_initial > 0.0 && self.lr_final > 0.0,
            "learning rates must be positive"
        );
        ensure!(
            0.0 < self.min_depth && self.min_depth < self.max_depth,
            "need 0 < min_depth < max_depth, got {} and {}",
            self.min_depth,
            self.max_depth
        );
        ensure!(self.num_scales >= 1, "num_scales must be at least 1");
        ensure!(
            self.rotation_scale > 0.0 && self.translation_scale > 0.0,
            "pose output scales must be positive"
        );
        let (b1, b2) = self.adam_betas;
        ensure!(
            (0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2),
            "Adam betas must lie in [0, 1)"
        );
        Ok(())
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch <= self.lr_drop_epoch {
            self.lr_initial
        } else {
            self.lr_final
        }
    }
}

/// Sigmoid disparity in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

/// `depth = 1 / (b + (a - b) · disp)` with `a = 1 / min_depth`, `b = 1 / max_depth`.
pub fn disp_to_depth_tensor<B: Backend, const D: usize>(
    disp: Tensor<B, D>,
    min_depth: f64,
    max_depth: f64,
) -> Tensor<B, D> {
    let (a, b) = (1.0 / min_depth, 1.0 / max_depth);
    (disp * (a - b)).add_scalar(b).recip()
}

/// Checked form of [`disp_to_depth_tensor`] for a single map.
pub fn disp_to_depth(disp: &DisparityMap, min_depth: f64, max_depth: f64) -> Result<DepthMap> {
    ensure!(
        0.0 < min_depth && min_depth < max_depth,
        "need 0 < min_depth < max_depth"
    );
    ensure!(
        disp.data.iter().all(|&d| d > 0.0 && d < 1.0),
        "disparity values must lie strictly inside (0, 1)"
    );
    let (a, b) = (1.0 / min_depth, 1.0 / max_depth);
    let data = disp
        .data
        .iter()
        .map(|&d| (1.0 / (b + (a - b) * d as f64)) as f32)
        .collect();
    DepthMap::new(disp.height, disp.width, data)
}
