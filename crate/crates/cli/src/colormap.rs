//! Fixed preview colormap.
//!
//! Inverse depth is normalised per image to `[0, 1]` (nearest pixel = 1) and mapped through a
//! piecewise-linear ramp of five magma-like stops, dark for far and pale yellow for near.

use std::path::Path;

use ctxdepth::geometry::DepthMap;

pub const STOPS: [[u8; 3]; 5] = [
    [0, 0, 4],
    [81, 18, 124],
    [183, 55, 121],
    [252, 137, 97],
    [252, 253, 191],
];

/// Colour at `t` in `[0, 1]`; values outside are clamped.
pub fn color(t: f32) -> [u8; 3] {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let x = t * (STOPS.len() - 1) as f32;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f32;
    std::array::from_fn(|c| {
        let (a, b) = (STOPS[i][c] as f32, STOPS[i + 1][c] as f32);
        (a + (b - a) * f).round() as u8
    })
}

pub fn render(depth: &DepthMap) -> image::RgbImage {
    let inv: Vec<f32> = depth
        .data
        .iter()
        .map(|&d| 1.0 / d.max(f32::MIN_POSITIVE))
        .collect();
    let (lo, hi) = inv
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    image::RgbImage::from_fn(depth.width as u32, depth.height as u32, |u, v| {
        let t = (inv[v as usize * depth.width + u as usize] - lo) / span;
        image::Rgb(color(t))
    })
}

pub fn save_preview(depth: &DepthMap, path: &Path) -> image::ImageResult<()> {
    render(depth).save(path)
}
