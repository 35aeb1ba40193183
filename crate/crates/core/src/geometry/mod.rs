//! Pinhole camera model, rigid motion and differentiable view synthesis.

mod grid;
mod intrinsics;
mod pose;
mod warp;

pub use grid::{DepthMap, PixelGrid};
pub use intrinsics::{scale_intrinsics, Intrinsics};
pub use pose::{
    pose_from_6dof, pose_from_6dof_tensor, regressor_to_transform, Pose, RigidTransform,
};
pub use warp::{
    backproject, bilinear_sample, mask_and, project, warp, Projection, Synthesized, Z_EPS,
};
