//! Training objective: SSIM/L1 photometric error, per-pixel minimum reprojection and
//! edge-aware disparity smoothness.

use burn::tensor::{backend::Backend, module::avg_pool2d, Bool, Int, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::mask_and;
use crate::tensor_util;

/// Value written into invalid candidates before taking the per-pixel minimum.
const INVALID_ERROR: f64 = 1e6;
/// Offset that lets a warped source win ties against an identity candidate.
const IDENTITY_TIE_BREAK: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the SSIM term against the L1 term.
    pub alpha: f64,
    pub lambda_re: f64,
    pub beta_smooth: f64,
    /// Side of the SSIM box window; odd.
    pub ssim_window: usize,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
    /// Exclude pixels where an unwarped source already matches better than any warp.
    pub automask: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            lambda_re: 1.0,
            beta_smooth: 1e-3,
            ssim_window: 3,
            ssim_c1: 0.01f64.powi(2),
            ssim_c2: 0.03f64.powi(2),
            automask: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            (0.0..=1.0).contains(&self.alpha),
            "alpha must lie in [0, 1], got {}",
            self.alpha
        );
        ensure!(
            self.lambda_re >= 0.0 && self.beta_smooth >= 0.0,
            "loss weights must be non-negative"
        );
        ensure!(
            self.ssim_window % 2 == 1,
            "ssim_window must be odd, got {}",
            self.ssim_window
        );
        ensure!(
            self.ssim_c1 > 0.0 && self.ssim_c2 > 0.0,
            "SSIM stabilisers must be positive"
        );
        Ok(())
    }
}

/// Pads the two trailing dimensions by mirroring without repeating the edge.
pub fn reflection_pad<B: Backend>(x: Tensor<B, 4>, pad: usize) -> Result<Tensor<B, 4>> {
    if pad == 0 {
        return Ok(x);
    }
    let [n, c, h, w] = x.dims();
    ensure!(
        h > pad && w > pad,
        "reflection padding of {pad} needs an image larger than {h}x{w}"
    );
    let row = |t: &Tensor<B, 4>, i: usize| t.clone().slice([0..n, 0..c, i..i + 1]);
    let mut rows: Vec<_> = (1..=pad).rev().map(|i| row(&x, i)).collect();
    rows.push(x.clone());
    rows.extend((1..=pad).map(|i| row(&x, h - 1 - i)));
    let x = Tensor::cat(rows, 2);

    let hp = h + 2 * pad;
    let col = |t: &Tensor<B, 4>, j: usize| t.clone().slice([0..n, 0..c, 0..hp, j..j + 1]);
    let mut cols: Vec<_> = (1..=pad).rev().map(|j| col(&x, j)).collect();
    cols.push(x.clone());
    cols.extend((1..=pad).map(|j| col(&x, w - 1 - j)));
    Ok(Tensor::cat(cols, 3))
}

/// Per-pixel, per-channel SSIM over a box window with reflection padding.
pub fn ssim<B: Backend>(
    a: Tensor<B, 4>,
    b: Tensor<B, 4>,
    cfg: &LossConfig,
) -> Result<Tensor<B, 4>> {
    ensure!(
        a.dims() == b.dims(),
        "SSIM inputs differ in shape: {:?} vs {:?}",
        a.dims(),
        b.dims()
    );
    let k = cfg.ssim_window;
    ensure!(k % 2 == 1, "ssim_window must be odd, got {k}");
    let pad = k / 2;
    let pool = |x: Tensor<B, 4>| -> Result<Tensor<B, 4>> {
        Ok(avg_pool2d(
            reflection_pad(x, pad)?,
            [k, k],
            [1, 1],
            [0, 0],
            true,
        ))
    };

    let mu_a = pool(a.clone())?;
    let mu_b = pool(b.clone())?;
    let sigma_a = pool(a.clone() * a.clone())? - mu_a.clone() * mu_a.clone();
    let sigma_b = pool(b.clone() * b.clone())? - mu_b.clone() * mu_b.clone();
    let sigma_ab = pool(a * b)? - mu_a.clone() * mu_b.clone();

    let numerator =
        (mu_a.clone() * mu_b.clone() * 2.0 + cfg.ssim_c1) * (sigma_ab * 2.0 + cfg.ssim_c2);
    let denominator = (mu_a.clone() * mu_a + mu_b.clone() * mu_b + cfg.ssim_c1)
        * (sigma_a + sigma_b + cfg.ssim_c2);
    Ok(numerator / denominator)
}

/// `(α/2)(1 − SSIM) + (1 − α)|target − synthesized|`, averaged over channels.
///
/// Returns `[N, H, W]`.
pub fn photometric_error<B: Backend>(
    target: Tensor<B, 4>,
    synthesized: Tensor<B, 4>,
    cfg: &LossConfig,
) -> Result<Tensor<B, 3>> {
    ensure!(
        target.dims() == synthesized.dims(),
        "photometric inputs differ in shape: {:?} vs {:?}",
        target.dims(),
        synthesized.dims()
    );
    let [n, _, h, w] = target.dims();
    let l1 = (target.clone() - synthesized.clone()).abs();
    let per_channel = if cfg.alpha > 0.0 {
        let dissim = ssim(target, synthesized, cfg)?.neg() + 1.0;
        dissim * (cfg.alpha / 2.0) + l1 * (1.0 - cfg.alpha)
    } else {
        l1
    };
    Ok(per_channel.mean_dim(1).reshape([n, h, w]))
}

/// Per-pixel minimum over source frames.
#[derive(Debug, Clone)]
pub struct MinReprojection<B: Backend> {
    /// `[N, H, W]`; zero where [`valid`](Self::valid) is false.
    pub error: Tensor<B, 3>,
    /// Index of the winning candidate per pixel.
    pub selection: Tensor<B, 3, Int>,
    /// Pixels valid in at least one source (and not auto-masked).
    pub valid: Tensor<B, 3, Bool>,
}

impl<B: Backend> MinReprojection<B> {
    /// Mean error over valid pixels; zero if none are valid.
    pub fn mean(&self) -> Tensor<B, 1> {
        let weight = self.valid.clone().float();
        let count = weight.clone().sum().clamp_min(1.0);
        (self.error.clone() * weight).sum() / count
    }
}

/// Takes the per-pixel minimum error over sources, considering only sources valid at the pixel.
pub fn min_reprojection<B: Backend>(
    errors: &[Tensor<B, 3>],
    masks: &[Tensor<B, 3, Bool>],
) -> Result<MinReprojection<B>> {
    ensure!(
        !errors.is_empty(),
        "min_reprojection needs at least one error map"
    );
    ensure!(
        errors.len() == masks.len(),
        "{} error maps but {} masks",
        errors.len(),
        masks.len()
    );
    let shape = errors[0].dims();
    ensure!(
        errors.iter().all(|e| e.dims() == shape) && masks.iter().all(|m| m.dims() == shape),
        "error maps and masks must all be {shape:?}"
    );

    // Candidates go on the last axis: the ndarray backward of min_dim only handles that one.
    let stacked: Tensor<B, 4> = Tensor::stack(errors.to_vec(), 3);
    let valid_stack: Tensor<B, 4, Bool> = Tensor::stack(masks.to_vec(), 3);
    let filled = stacked.mask_fill(valid_stack.clone().bool_not(), INVALID_ERROR);
    let (min, index) = filled.min_dim_with_indices(3);
    let valid = valid_stack.any_dim(3).squeeze::<3>(3);
    let error = min.squeeze::<3>(3).mask_fill(valid.clone().bool_not(), 0.0);
    Ok(MinReprojection {
        error,
        selection: index.squeeze::<3>(3),
        valid,
    })
}

/// Minimum reprojection with auto-masking: identity errors (target against the unwarped
/// sources) compete with the warped errors, and pixels won by an identity candidate are
/// excluded.
pub fn min_reprojection_automasked<B: Backend>(
    errors: &[Tensor<B, 3>],
    masks: &[Tensor<B, 3, Bool>],
    identity_errors: &[Tensor<B, 3>],
) -> Result<MinReprojection<B>> {
    ensure!(
        !errors.is_empty(),
        "min_reprojection needs at least one error map"
    );
    let shape = errors[0].dims();
    let mut all_errors = errors.to_vec();
    let mut all_masks = masks.to_vec();
    for e in identity_errors {
        ensure!(e.dims() == shape, "identity error map must be {shape:?}");
        let device = e.device();
        all_errors.push(e.clone().detach() + IDENTITY_TIE_BREAK);
        all_masks.push(Tensor::<B, 3>::ones(shape, &device).greater_elem(0.0));
    }
    let mut out = min_reprojection(&all_errors, &all_masks)?;
    let warped_won = out.selection.clone().lower_elem(errors.len() as i64);
    let any_warp_valid = Tensor::stack::<4>(masks.to_vec(), 0)
        .any_dim(0)
        .squeeze::<3>(0);
    out.valid = mask_and(warped_won, any_warp_valid);
    out.error = out.error.mask_fill(out.valid.clone().bool_not(), 0.0);
    Ok(out)
}

/// Edge-aware smoothness of mean-normalised disparity: `|∂x d*| e^{−|∂x I|} + |∂y d*| e^{−|∂y I|}`,
/// each term averaged over its forward-difference pixels.
///
/// `disp` is `[N, 1, H, W]` and `image` `[N, C, H, W]`.
pub fn edge_aware_smoothness<B: Backend>(
    disp: Tensor<B, 4>,
    image: Tensor<B, 4>,
) -> Result<Tensor<B, 1>> {
    let [n, one, h, w] = disp.dims();
    let [ni, c, hi, wi] = image.dims();
    ensure!(one == 1, "disparity must have one channel");
    ensure!(
        n == ni && h == hi && w == wi,
        "disparity {:?} and image {:?} are not congruent",
        disp.dims(),
        image.dims()
    );

    let mean = disp.clone().mean_dim(2).mean_dim(3);
    let smallest = tensor_util::to_vec_f64(mean.clone().abs())
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    ensure!(smallest > 0.0, "disparity has zero mean; cannot normalise");
    let d = disp / mean;

    let device = d.device();
    let mut total = Tensor::<B, 1>::zeros([1], &device);
    if w > 1 {
        let dx = (d.clone().slice([0..n, 0..1, 0..h, 0..w - 1])
            - d.clone().slice([0..n, 0..1, 0..h, 1..w]))
        .abs();
        let ix = (image.clone().slice([0..n, 0..c, 0..h, 0..w - 1])
            - image.clone().slice([0..n, 0..c, 0..h, 1..w]))
        .abs()
        .mean_dim(1);
        total = total + (dx * ix.neg().exp()).mean();
    }
    if h > 1 {
        let dy = (d.clone().slice([0..n, 0..1, 0..h - 1, 0..w])
            - d.slice([0..n, 0..1, 1..h, 0..w]))
        .abs();
        let iy = (image.clone().slice([0..n, 0..c, 0..h - 1, 0..w])
            - image.slice([0..n, 0..c, 1..h, 0..w]))
        .abs()
        .mean_dim(1);
        total = total + (dy * iy.neg().exp()).mean();
    }
    Ok(total)
}

/// `λ_re · L_re + β · L_smooth`.
pub fn total_loss<B: Backend>(
    photometric: Tensor<B, 1>,
    smoothness: Tensor<B, 1>,
    cfg: &LossConfig,
) -> Tensor<B, 1> {
    photometric * cfg.lambda_re + smoothness * cfg.beta_smooth
}
