use burn::tensor::{backend::Backend, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tensor_util;

/// Homogeneous pixel coordinates `(u, v, 1)` for every pixel of an `H x W` image.
///
/// Pixel centres sit on integer coordinates, origin top-left, `u` to the right and `v` down.
/// Storage is row-major over `(v, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    height: usize,
    width: usize,
    coords: Vec<[f64; 3]>,
}

impl PixelGrid {
    pub fn new(height: usize, width: usize) -> Self {
        let mut coords = Vec::with_capacity(height * width);
        for v in 0..height {
            for u in 0..width {
                coords.push([u as f64, v as f64, 1.0]);
            }
        }
        Self {
            height,
            width,
            coords,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn at(&self, v: usize, u: usize) -> [f64; 3] {
        self.coords[v * self.width + u]
    }

    /// `[3, H*W]` tensor with rows u, v and 1.
    pub fn to_tensor<B: Backend>(&self, device: &B::Device) -> Tensor<B, 2> {
        let n = self.coords.len();
        let mut values = vec![0.0; 3 * n];
        for (i, c) in self.coords.iter().enumerate() {
            values[i] = c[0];
            values[n + i] = c[1];
            values[2 * n + i] = c[2];
        }
        tensor_util::from_vec_f64(values, [3, n], device)
    }

    /// `[batch, H, W, 2]` sampling coordinates that reproduce the source image.
    pub fn identity_coords<B: Backend>(&self, batch: usize, device: &B::Device) -> Tensor<B, 4> {
        let values: Vec<f64> = self.coords.iter().flat_map(|c| [c[0], c[1]]).collect();
        tensor_util::from_vec_f64::<B, 4>(values, [1, self.height, self.width, 2], device)
            .repeat_dim(0, batch)
    }
}

/// Per-pixel depth in metres. Zero marks a missing value in ground-truth maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(
            data.len() == height * width,
            "depth buffer has {} values, expected {}x{}",
            data.len(),
            height,
            width
        );
        ensure!(
            data.iter().all(|d| d.is_finite()),
            "depth map contains non-finite values"
        );
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, depth: f32) -> Self {
        Self {
            height,
            width,
            data: vec![depth; height * width],
        }
    }

    pub fn at(&self, v: usize, u: usize) -> f32 {
        self.data[v * self.width + u]
    }

    pub fn is_valid(&self, v: usize, u: usize) -> bool {
        self.at(v, u) > 0.0
    }

    /// `[1, 1, H, W]`
    pub fn to_tensor<B: Backend>(&self, device: &B::Device) -> Tensor<B, 4> {
        tensor_util::from_vec(self.data.clone(), [1, 1, self.height, self.width], device)
    }

    /// Reads batch entry `index` of a `[N, 1, H, W]` tensor.
    pub fn from_tensor<B: Backend>(tensor: Tensor<B, 4>, index: usize) -> Result<Self> {
        let [n, c, h, w] = tensor.dims();
        ensure!(
            index < n && c == 1,
            "expected [N, 1, H, W] with N > {index}"
        );
        let data = tensor_util::to_vec(tensor.slice([index..index + 1]));
        Self::new(h, w, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_row_major_and_homogeneous() {
        let g = PixelGrid::new(2, 3);
        assert_eq!(g.at(0, 0), [0.0, 0.0, 1.0]);
        assert_eq!(g.at(1, 2), [2.0, 1.0, 1.0]);
        assert_eq!(g.coords()[4], [1.0, 1.0, 1.0]);
    }

    #[test]
    fn regeneration_is_bit_identical() {
        assert_eq!(PixelGrid::new(17, 31), PixelGrid::new(17, 31));
    }

    #[test]
    fn depth_rejects_bad_buffers() {
        assert!(DepthMap::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DepthMap::new(1, 2, vec![1.0, f32::NAN]).is_err());
    }
}
