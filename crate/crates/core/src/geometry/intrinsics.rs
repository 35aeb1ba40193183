use burn::tensor::{backend::Backend, Tensor};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tensor_util;

/// Pinhole camera intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics with unit focal length and the principal point at the origin.
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            width,
            height,
        }
    }

    /// Builds intrinsics from a matrix normalised by image size, as shipped with KITTI
    /// loaders (`fx/W, fy/H, cx/W, cy/H`).
    pub fn from_normalized(normalized: [f64; 4], width: usize, height: usize) -> Result<Self> {
        let [nfx, nfy, ncx, ncy] = normalized;
        let (w, h) = (width as f64, height as f64);
        Self::new(nfx * w, nfy * h, ncx * w, ncy * h, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0,
            "focal lengths must be positive and finite (fx={}, fy={})",
            self.fx,
            self.fy
        );
        ensure!(
            self.cx.is_finite() && self.cy.is_finite(),
            "principal point must be finite"
        );
        ensure!(
            self.width >= 1 && self.height >= 1,
            "image size must be at least 1x1 (got {}x{})",
            self.width,
            self.height
        );
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Scales focal lengths, principal point and image size by `num / den`.
    ///
    /// The scaled image size must stay integral.
    pub fn scale(&self, num: u32, den: u32) -> Result<Self> {
        ensure!(num > 0 && den > 0, "scale factor must be positive");
        let (num, den) = (num as usize, den as usize);
        ensure!(
            (self.width * num) % den == 0 && (self.height * num) % den == 0,
            "scaling {}x{} by {}/{} gives a non-integral image size",
            self.width,
            self.height,
            num,
            den
        );
        let s = num as f64 / den as f64;
        Ok(Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: self.width * num / den,
            height: self.height * num / den,
        })
    }

    /// Intrinsics for an image resized to `width x height` (independent axis factors).
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self::new(
            self.fx * sx,
            self.fy * sy,
            self.cx * sx,
            self.cy * sy,
            width,
            height,
        )
    }

    /// Intrinsics of the horizontally mirrored image.
    pub fn flipped_horizontally(&self) -> Self {
        Self {
            cx: (self.width as f64 - 1.0) - self.cx,
            ..*self
        }
    }

    /// `[batch, 3, 3]` tensor of K.
    pub fn to_tensor<B: Backend>(&self, batch: usize, device: &B::Device) -> Tensor<B, 3> {
        matrix_tensor(&self.matrix(), batch, device)
    }

    /// `[batch, 3, 3]` tensor of K⁻¹.
    pub fn inverse_tensor<B: Backend>(&self, batch: usize, device: &B::Device) -> Tensor<B, 3> {
        matrix_tensor(&self.inverse_matrix(), batch, device)
    }
}

/// Free-function form of [`Intrinsics::scale`].
pub fn scale_intrinsics(k: &Intrinsics, num: u32, den: u32) -> Result<Intrinsics> {
    k.scale(num, den)
}

pub(crate) fn matrix_tensor<B: Backend>(
    m: &Matrix3<f64>,
    batch: usize,
    device: &B::Device,
) -> Tensor<B, 3> {
    let mut values = Vec::with_capacity(9);
    for r in 0..3 {
        for c in 0..3 {
            values.push(m[(r, c)]);
        }
    }
    tensor_util::from_vec_f64::<B, 3>(values, [1, 3, 3], device).repeat_dim(0, batch)
}
