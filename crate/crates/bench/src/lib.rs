//! Deterministic inputs for the benchmarks.

use burn::tensor::{backend::Backend, Tensor};
use ctxdepth::geometry::PixelGrid;
use ctxdepth::tensor_util::from_vec_f64;

/// `[1, 3, h, w]` image of smooth stripes in `[0.1, 0.9]`.
pub fn image<B: Backend>(height: usize, width: usize, device: &B::Device) -> Tensor<B, 4> {
    let values = (0..3 * height * width)
        .map(|i| {
            let (c, v, u) = (i / (height * width), (i / width) % height, i % width);
            0.5 + 0.4 * ((u as f64 * 0.21 + v as f64 * 0.13 + c as f64).sin())
        })
        .collect();
    from_vec_f64(values, [1, 3, height, width], device)
}

/// `[1, h, w, 2]` sampling coordinates: the identity grid shifted by a sub-pixel offset.
pub fn shifted_coords<B: Backend>(
    height: usize,
    width: usize,
    shift: (f64, f64),
    device: &B::Device,
) -> Tensor<B, 4> {
    PixelGrid::new(height, width).identity_coords::<B>(1, device)
        + Tensor::<B, 1>::from_floats([shift.0, shift.1], device).reshape([1, 1, 1, 2])
}
