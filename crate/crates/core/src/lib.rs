//! Self-supervised monocular depth estimation with a contextual feature-fusion decoder.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`geometry`]: intrinsics, rigid poses, back-projection, projection and bilinear warping.
//! - [`losses`]: SSIM/L1 photometric error, per-pixel minimum reprojection and edge-aware
//!   smoothness.
//! - [`network`]: encoders, the fusion decoder with channel-attention disparity heads, the pose
//!   regressor and checkpoints.
//! - [`training`]: the joint depth/pose optimisation loop.
//! - [`data`]: KITTI-layout loading, split manifests and synthetic plane scenes.
//! - [`evaluation`]: depth metrics and parameter/MAC accounting.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod losses;
pub mod network;
pub mod tensor_util;
pub mod training;

pub use error::{Error, Result};

/// CPU backend used for inference and evaluation.
pub type CpuBackend = burn::backend::NdArray<f32>;
/// Autodiff-enabled CPU backend used for training.
pub type TrainBackend = burn::backend::Autodiff<CpuBackend>;
