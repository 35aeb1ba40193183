use burn::tensor::{backend::Backend, Tensor};
use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tensor_util;

/// Rigid motion `p' = R p + t` taking points from the target camera frame into a source frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::from(t),
        }
    }

    /// Builds a pose from `[rx, ry, rz, tx, ty, tz]`, where the first three entries are an
    /// axis-angle rotation.
    pub fn from_6dof(v: &[f64; 6]) -> Result<Self> {
        ensure!(
            v.iter().all(|x| x.is_finite()),
            "6-DOF vector must be finite, got {v:?}"
        );
        let rotation = Rotation3::from_scaled_axis(Vector3::new(v[0], v[1], v[2]));
        Ok(Self {
            rotation: *rotation.matrix(),
            translation: Vector3::new(v[3], v[4], v[5]),
        })
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Max deviation of `RᵀR` from identity and of det(R) from one.
    pub fn orthonormality_error(&self) -> f64 {
        let rtr = self.rotation.transpose() * self.rotation - Matrix3::identity();
        rtr.abs()
            .max()
            .max((self.rotation.determinant() - 1.0).abs())
    }

    /// `[batch, ...]` tensor form; every batch entry holds this pose.
    pub fn to_transform<B: Backend>(&self, batch: usize, device: &B::Device) -> RigidTransform<B> {
        let rotation = super::intrinsics::matrix_tensor(&self.rotation, batch, device);
        let translation = tensor_util::from_vec_f64::<B, 3>(
            self.translation.iter().copied().collect(),
            [1, 3, 1],
            device,
        )
        .repeat_dim(0, batch);
        RigidTransform {
            rotation,
            translation,
        }
    }
}

/// Free-function form of [`Pose::from_6dof`].
pub fn pose_from_6dof(v: &[f64; 6]) -> Result<Pose> {
    Pose::from_6dof(v)
}

/// Batched, differentiable rigid transform.
#[derive(Debug, Clone)]
pub struct RigidTransform<B: Backend> {
    /// `[batch, 3, 3]`
    pub rotation: Tensor<B, 3>,
    /// `[batch, 3, 1]`
    pub translation: Tensor<B, 3>,
}

impl<B: Backend> RigidTransform<B> {
    pub fn batch_size(&self) -> usize {
        self.rotation.dims()[0]
    }

    /// Reads the first batch entry back into a [`Pose`].
    pub fn to_pose(&self) -> Pose {
        let r = tensor_util::to_vec_f64(self.rotation.clone().slice([0..1]));
        let t = tensor_util::to_vec_f64(self.translation.clone().slice([0..1]));
        Pose {
            rotation: Matrix3::from_row_slice(&r),
            translation: Vector3::new(t[0], t[1], t[2]),
        }
    }
}

/// `[3, 9]`: row `i` is the flattened cross-product matrix of the `i`-th unit vector.
fn skew_generators<B: Backend>(device: &B::Device) -> Tensor<B, 2> {
    #[rustfmt::skip]
    let g = [
        0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0,
        0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ];
    Tensor::<B, 1>::from_floats(g, device).reshape([3, 9])
}

/// Differentiable Rodrigues map from `[batch, 6]` vectors (axis-angle, translation).
pub fn pose_from_6dof_tensor<B: Backend>(v: Tensor<B, 2>) -> RigidTransform<B> {
    let [batch, _] = v.dims();
    let device = v.device();
    let axis_angle = v.clone().slice([0..batch, 0..3]);
    let translation = v.slice([0..batch, 3..6]).reshape([batch, 3, 1]);

    // theta is regularised so the map stays differentiable at zero rotation
    let theta_sq = axis_angle.clone().powf_scalar(2.0).sum_dim(1);
    let theta = (theta_sq.clone() + 1e-12).sqrt();
    // sin(θ)/θ and (1 - cos θ)/θ² = 2 sin²(θ/2)/θ²
    let a = theta.clone().sin() / theta.clone();
    let half_sin = (theta.clone() * 0.5).sin();
    let b = half_sin.powf_scalar(2.0) * 2.0 / (theta_sq + 1e-12);

    // [r]x as a linear map of r; assembling it with `cat` next to constant zeros would hit a
    // backend bug that misplaces gradients of concatenated tensors when some need none
    let skew = axis_angle
        .matmul(skew_generators::<B>(&device))
        .reshape([batch, 3, 3]);
    let skew_sq = skew.clone().matmul(skew.clone());
    let eye = Tensor::<B, 2>::eye(3, &device)
        .unsqueeze::<3>()
        .repeat_dim(0, batch);
    let rotation = eye + skew * a.reshape([batch, 1, 1]) + skew_sq * b.reshape([batch, 1, 1]);
    RigidTransform {
        rotation,
        translation,
    }
}

/// Scales the axis-angle and translation parts of raw pose-regressor outputs before the
/// Rodrigues map.
pub fn regressor_to_transform<B: Backend>(
    raw: Tensor<B, 2>,
    rotation_scale: f64,
    translation_scale: f64,
) -> RigidTransform<B> {
    let [batch, _] = raw.dims();
    let rot = raw.clone().slice([0..batch, 0..3]) * rotation_scale;
    let trans = raw.slice([0..batch, 3..6]) * translation_scale;
    pose_from_6dof_tensor(Tensor::cat(vec![rot, trans], 1))
}
