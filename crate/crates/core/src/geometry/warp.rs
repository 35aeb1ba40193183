//! Back-projection, reprojection and bilinear resampling on batched tensors.

use burn::tensor::{backend::Backend, Bool, Int, Tensor};

use super::{PixelGrid, RigidTransform};
use crate::error::{ensure, Result};

/// Smallest transformed depth (metres) still considered in front of the camera.
pub const Z_EPS: f64 = 1e-4;

/// Result of [`project`]: sampling coordinates plus their validity.
#[derive(Debug, Clone)]
pub struct Projection<B: Backend> {
    /// `[N, H, W, 2]` pixel coordinates `(u, v)` in the source image.
    pub coords: Tensor<B, 4>,
    /// `[N, H, W]`, false where the point is behind the camera or lands outside the image.
    pub mask: Tensor<B, 3, Bool>,
}

/// Image synthesised by [`warp`] together with the pixels it is valid on.
#[derive(Debug, Clone)]
pub struct Synthesized<B: Backend> {
    /// `[N, C, H, W]`
    pub image: Tensor<B, 4>,
    /// `[N, H, W]`
    pub mask: Tensor<B, 3, Bool>,
}

pub fn mask_and<B: Backend, const D: usize>(
    a: Tensor<B, D, Bool>,
    b: Tensor<B, D, Bool>,
) -> Tensor<B, D, Bool> {
    (a.int() * b.int()).greater_elem(0)
}

/// Lifts every pixel to 3D: `depth(u, v) · K⁻¹ · (u, v, 1)ᵀ`.
///
/// `depth` is `[N, 1, H, W]`, `inv_k` is `[N, 3, 3]`; returns `[N, 3, H*W]`.
pub fn backproject<B: Backend>(
    depth: Tensor<B, 4>,
    inv_k: Tensor<B, 3>,
    grid: &PixelGrid,
) -> Result<Tensor<B, 3>> {
    let [n, c, h, w] = depth.dims();
    ensure!(c == 1, "depth must have a single channel, got {c}");
    ensure!(
        h == grid.height() && w == grid.width(),
        "depth is {h}x{w} but the pixel grid is {}x{}",
        grid.height(),
        grid.width()
    );
    ensure!(
        inv_k.dims() == [n, 3, 3],
        "inverse intrinsics must be [{n}, 3, 3], got {:?}",
        inv_k.dims()
    );
    let pixels = grid
        .to_tensor::<B>(&depth.device())
        .unsqueeze::<3>()
        .repeat_dim(0, n);
    let rays = inv_k.matmul(pixels);
    Ok(rays * depth.reshape([n, 1, h * w]))
}

/// Moves points into the source frame and projects them: `K · (R p + t)` followed by the
/// perspective divide.
///
/// `points` is `[N, 3, H*W]`, `k` is `[N, 3, 3]`.
pub fn project<B: Backend>(
    points: Tensor<B, 3>,
    transform: &RigidTransform<B>,
    k: Tensor<B, 3>,
    height: usize,
    width: usize,
) -> Result<Projection<B>> {
    let [n, three, hw] = points.dims();
    ensure!(
        three == 3,
        "points must be [N, 3, H*W], got {:?}",
        points.dims()
    );
    ensure!(
        hw == height * width,
        "{hw} points do not fill a {height}x{width} image"
    );
    ensure!(
        transform.batch_size() == n && k.dims() == [n, 3, 3],
        "pose/intrinsics batch does not match {n} point sets"
    );

    let moved = transform.rotation.clone().matmul(points) + transform.translation.clone();
    // K has a (0, 0, 1) last row, so dividing by z before applying K is the same map; it avoids
    // the large cx·z products that cost single precision a few ulps per pixel
    let z = moved.clone().slice([0..n, 2..3, 0..hw]);
    let in_front = z.clone().greater_elem(Z_EPS);
    let cam = k.matmul(moved / z.clamp_min(Z_EPS));
    let u = cam.clone().slice([0..n, 0..1, 0..hw]);
    let v = cam.slice([0..n, 1..2, 0..hw]);

    // the image covers [-0.5, W - 0.5] x [-0.5, H - 0.5] around integer pixel centres
    let inside_u = mask_and(
        u.clone().greater_equal_elem(-0.5),
        u.clone().lower_equal_elem(width as f64 - 0.5),
    );
    let inside_v = mask_and(
        v.clone().greater_equal_elem(-0.5),
        v.clone().lower_equal_elem(height as f64 - 0.5),
    );
    let mask = mask_and(in_front, mask_and(inside_u, inside_v)).reshape([n, height, width]);

    let coords = Tensor::cat(vec![u, v], 1)
        .swap_dims(1, 2)
        .reshape([n, height, width, 2]);
    Ok(Projection { coords, mask })
}

/// Bilinear sampling of `source` (`[N, C, Hs, Ws]`) at pixel coordinates `coords`
/// (`[N, H, W, 2]`). Coordinates outside the image are clamped to the nearest edge.
///
/// Differentiable with respect to both the image and the coordinates.
pub fn bilinear_sample<B: Backend>(
    source: Tensor<B, 4>,
    coords: Tensor<B, 4>,
) -> Result<Tensor<B, 4>> {
    let [n, c, hs, ws] = source.dims();
    let [nc, h, w, two] = coords.dims();
    ensure!(two == 2, "coordinates must have a trailing dimension of 2");
    ensure!(
        nc == n,
        "coordinate batch {nc} does not match image batch {n}"
    );
    ensure!(hs >= 1 && ws >= 1, "source image is empty");
    let hw = h * w;

    let coords = coords.reshape([n, hw, 2]);
    let u = coords
        .clone()
        .slice([0..n, 0..hw, 0..1])
        .reshape([n, 1, hw])
        .clamp(0.0, (ws - 1) as f64);
    let v = coords
        .slice([0..n, 0..hw, 1..2])
        .reshape([n, 1, hw])
        .clamp(0.0, (hs - 1) as f64);

    let u0 = u
        .clone()
        .detach()
        .floor()
        .clamp(0.0, ws.saturating_sub(2) as f64);
    let v0 = v
        .clone()
        .detach()
        .floor()
        .clamp(0.0, hs.saturating_sub(2) as f64);
    let wu = u - u0.clone();
    let wv = v - v0.clone();

    // NaN coordinates gather pixel 0 and stay NaN through the weights, so a diverged model
    // surfaces as a non-finite loss rather than an integer-cast panic.
    let u0i: Tensor<B, 3, Int> = u0.clone().mask_fill(u0.is_nan(), 0.0).int();
    let v0i: Tensor<B, 3, Int> = v0.clone().mask_fill(v0.is_nan(), 0.0).int();
    let u1i = (u0i.clone() + 1).clamp_max((ws - 1) as i64);
    let v1i = (v0i.clone() + 1).clamp_max((hs - 1) as i64);

    let flat = source.reshape([n, c, hs * ws]);
    let gather = |vi: Tensor<B, 3, Int>, ui: Tensor<B, 3, Int>| {
        let index = (vi * ws as i64 + ui).expand([n, c, hw]);
        flat.clone().gather(2, index)
    };
    let p00 = gather(v0i.clone(), u0i.clone());
    let p01 = gather(v0i, u1i.clone());
    let p10 = gather(v1i.clone(), u0i);
    let p11 = gather(v1i, u1i);

    let one_wu = wu.clone().neg() + 1.0;
    let one_wv = wv.clone().neg() + 1.0;
    let top = p00 * one_wu.clone() + p01 * wu.clone();
    let bottom = p10 * one_wu + p11 * wu;
    let out = top * one_wv + bottom * wv;
    Ok(out.reshape([n, c, h, w]))
}

/// Synthesises the target view by sampling `source` at the projected coordinates.
///
/// Pixels flagged invalid in `projection.mask` still receive clamp-to-edge samples; the mask is
/// carried along so the loss can exclude them.
pub fn warp<B: Backend>(
    source: Tensor<B, 4>,
    projection: &Projection<B>,
) -> Result<Synthesized<B>> {
    let [n, h, w, _] = projection.coords.dims();
    ensure!(
        projection.mask.dims() == [n, h, w],
        "mask shape {:?} does not match coordinates {:?}",
        projection.mask.dims(),
        projection.coords.dims()
    );
    let image = bilinear_sample(source, projection.coords.clone())?;
    Ok(Synthesized {
        image,
        mask: projection.mask.clone(),
    })
}
