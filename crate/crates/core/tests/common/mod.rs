//! Criterion checks shared by the integration tests and the acceptance report.
//!
//! Each check measures one property and returns a [`Check`] instead of panicking, so the
//! acceptance target can print every outcome and the integration tests can assert on them.
#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use burn::backend::{Autodiff, NdArray};
use burn::tensor::{backend::Backend, Tensor};
use ctxdepth::data::{generate_synthetic_dataset, generate_synthetic_scene, gt_warp_residual};
use ctxdepth::data::{load_split, AugmentConfig, FrameTriplet, SyntheticSpec};
use ctxdepth::evaluation::{compute_metrics, estimate_flops, DepthMetrics, EvalCrop, EvalProtocol};
use ctxdepth::geometry::{
    backproject, pose_from_6dof_tensor, project, DepthMap, Intrinsics, PixelGrid, Pose,
};
use ctxdepth::losses::{
    edge_aware_smoothness, min_reprojection, photometric_error, ssim, total_loss, LossConfig,
};
use ctxdepth::network::{DepthNetConfig, FusionGrid, PYRAMID_LEVELS};
use ctxdepth::tensor_util::{from_vec_f64, mask_to_vec, scalar, to_vec_f64};
use ctxdepth::training::{
    disp_to_depth_tensor, read_metrics, reprojection, FrameBatch, TrainConfig, Trainer,
    METRICS_FILE,
};
use ctxdepth::{CpuBackend, TrainBackend};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type F64 = NdArray<f64>;
pub type F64Grad = Autodiff<NdArray<f64>>;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} {}: {}", self.name, self.detail)
    }

    pub fn assert(&self) {
        assert!(self.passed, "{}", self.line());
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth random image: a few low-frequency sinusoids per channel, values in `[0.1, 0.9]`.
pub fn smooth_image(seed: u64, height: usize, width: usize) -> Vec<f64> {
    let mut r = rng(seed);
    let mut out = vec![0.5; 3 * height * width];
    for c in 0..3 {
        let waves: Vec<[f64; 3]> = (0..3)
            .map(|_| {
                [
                    r.gen_range(-0.9..0.9),
                    r.gen_range(-0.9..0.9),
                    r.gen_range(0.0..std::f64::consts::TAU),
                ]
            })
            .collect();
        for v in 0..height {
            for u in 0..width {
                let s: f64 = waves
                    .iter()
                    .map(|[kx, ky, ph]| (kx * u as f64 + ky * v as f64 + ph).sin())
                    .sum();
                out[(c * height + v) * width + u] = 0.5 + 0.4 * s / 3.0;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------------------------
// Geometry

/// Plane scene d=10 m, f=100 px, b=0.5 m: the warped neighbours match the target to < 1e-3.
pub fn geometry_oracle() -> Check {
    let spec = SyntheticSpec::default();
    let (result, elapsed) = timed(|| {
        let scene = generate_synthetic_scene(&spec, 0)?;
        gt_warp_residual::<CpuBackend>(&scene, &Default::default())
    });
    match result {
        Ok([prev, next]) => Check::new(
            "geometry oracle",
            prev < 1e-3 && next < 1e-3 && elapsed < Duration::from_secs(5),
            format!(
                "warp MAE t-1 {prev:.2e}, t+1 {next:.2e} (< 1e-3); {:.2} s (< 5 s)",
                elapsed.as_secs_f64()
            ),
        ),
        Err(e) => Check::new("geometry oracle", false, format!("error: {e}")),
    }
}

/// Largest pixel displacement after backprojecting random depth and projecting with the
/// identity pose, on the given backend.
pub fn identity_round_trip_error<B: Backend>(height: usize, width: usize, seed: u64) -> f64 {
    let device = B::Device::default();
    let k = Intrinsics::new(58.0, 61.0, 31.5, 30.0, width, height).unwrap();
    let mut r = rng(seed);
    let depth: Vec<f64> = (0..height * width)
        .map(|_| r.gen_range(0.5..80.0))
        .collect();
    let grid = PixelGrid::new(height, width);
    let points = backproject(
        from_vec_f64::<B, 4>(depth, [1, 1, height, width], &device),
        k.inverse_tensor(1, &device),
        &grid,
    )
    .unwrap();
    let p = project(
        points,
        &Pose::identity().to_transform(1, &device),
        k.to_tensor(1, &device),
        height,
        width,
    )
    .unwrap();
    let coords = to_vec_f64(p.coords);
    grid.coords()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (coords[2 * i] - c[0])
                .abs()
                .max((coords[2 * i + 1] - c[1]).abs())
        })
        .fold(0.0, f64::max)
}

pub fn identity_invariant() -> Check {
    let err = identity_round_trip_error::<CpuBackend>(64, 64, 3);
    Check::new(
        "identity invariant",
        err < 1e-5,
        format!("max round-trip error {err:.2e} px on 64x64 (< 1e-5)"),
    )
}

// ---------------------------------------------------------------------------------------------
// Losses

pub fn loss_invariants() -> Check {
    type B = CpuBackend;
    let device = Default::default();
    let cfg = LossConfig::default();
    let (h, w) = (16, 24);
    let image = |seed| from_vec_f64::<B, 4>(smooth_image(seed, h, w), [1, 3, h, w], &device);
    let mut notes = Vec::new();
    let mut ok = true;

    let x = image(1);
    let s = to_vec_f64(ssim(x.clone(), x.clone(), &cfg).unwrap());
    let ssim_dev = s.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    ok &= ssim_dev <= 1e-6;
    notes.push(format!("|ssim(x,x)-1| {ssim_dev:.1e}"));

    let pe = to_vec_f64(photometric_error(x.clone(), x.clone(), &cfg).unwrap());
    let pe_max = pe.iter().cloned().fold(0.0, f64::max);
    ok &= pe_max == 0.0;
    notes.push(format!("max pe(I,I) {pe_max:.1e}"));

    let mut r = rng(5);
    let errors: Vec<Tensor<B, 3>> = (0..2)
        .map(|_| {
            let v: Vec<f64> = (0..h * w).map(|_| r.gen_range(0.0..1.0)).collect();
            from_vec_f64(v, [1, h, w], &device)
        })
        .collect();
    let masks: Vec<_> = (0..2)
        .map(|_| {
            let v: Vec<f64> = (0..h * w).map(|_| r.gen_range(0.0..1.0)).collect();
            from_vec_f64::<B, 3>(v, [1, h, w], &device).greater_elem(0.3)
        })
        .collect();
    let min = min_reprojection(&errors, &masks).unwrap();
    let out = to_vec_f64(min.error);
    let mut violations = 0;
    for (e, m) in errors.iter().zip(&masks) {
        let e = to_vec_f64(e.clone());
        let m = mask_to_vec(m.clone());
        violations += (0..h * w).filter(|&i| m[i] && out[i] > e[i]).count();
    }
    ok &= violations == 0;
    notes.push(format!("min-reprojection violations {violations}"));

    let constant = Tensor::<B, 4>::ones([1, 1, h, w], &device) * 0.3;
    let flat = scalar(edge_aware_smoothness(constant, x.clone()).unwrap());
    ok &= flat == 0.0;
    notes.push(format!("smooth(const) {flat:.1e}"));

    let disp: Vec<f64> = smooth_image(9, h, w)[..h * w].to_vec();
    let disp = from_vec_f64::<B, 4>(disp, [1, 1, h, w], &device);
    let base = scalar(edge_aware_smoothness(disp.clone(), x.clone()).unwrap());
    let scale_dev = [0.01, 0.5, 3.0, 250.0]
        .iter()
        .map(|&k| {
            (scalar(edge_aware_smoothness(disp.clone() * k, x.clone()).unwrap()) - base).abs()
        })
        .fold(0.0, f64::max);
    ok &= scale_dev <= 1e-6;
    notes.push(format!("smooth scale drift {scale_dev:.1e}"));

    Check::new("loss invariants", ok, notes.join(", "))
}

/// A random 8x8 view-synthesis problem: three frames, a disparity map and two 6-vectors.
pub struct GradInstance {
    pub frames: [Vec<f64>; 3],
    pub disp: Vec<f64>,
    /// Row-major `[2, 6]`: target to t-1, target to t+1.
    pub pose: Vec<f64>,
    pub k: Intrinsics,
}

pub const GRAD_SIZE: usize = 8;

impl GradInstance {
    pub fn random(seed: u64) -> Self {
        let n = GRAD_SIZE;
        let mut r = rng(seed);
        let frames = [
            smooth_image(seed * 3 + 1, n, n),
            smooth_image(seed * 3 + 2, n, n),
            smooth_image(seed * 3 + 3, n, n),
        ];
        let disp = (0..n * n).map(|_| r.gen_range(0.3..0.7)).collect();
        let pose = (0..12)
            .map(|i| {
                if i % 6 < 3 {
                    r.gen_range(-0.03..0.03)
                } else {
                    r.gen_range(-0.01..0.01)
                }
            })
            .collect();
        let k = Intrinsics::new(8.0, 8.0, 3.5, 3.5, n, n).unwrap();
        Self {
            frames,
            disp,
            pose,
            k,
        }
    }

    /// `total_loss` of the instance as a function of disparity `[1, 1, 8, 8]` and pose `[2, 6]`.
    pub fn loss<B: Backend>(
        &self,
        disp: Tensor<B, 4>,
        pose: Tensor<B, 2>,
        cfg: &LossConfig,
    ) -> Tensor<B, 1> {
        let n = GRAD_SIZE;
        let device = disp.device();
        let frame = |i: usize| from_vec_f64::<B, 4>(self.frames[i].clone(), [1, 3, n, n], &device);
        let batch = FrameBatch {
            target: frame(1),
            sources: vec![frame(0), frame(2)],
            intrinsics: vec![self.k],
        };
        let depth = disp_to_depth_tensor(disp.clone(), 0.1, 100.0);
        let transforms = [
            pose_from_6dof_tensor(pose.clone().slice([0..1, 0..6])),
            pose_from_6dof_tensor(pose.slice([1..2, 0..6])),
        ];
        let photo = reprojection(&batch, depth, &transforms, 0, cfg)
            .unwrap()
            .mean();
        let smooth = edge_aware_smoothness(disp, batch.target.clone()).unwrap();
        total_loss(photo, smooth, cfg)
    }

    fn eval(&self, disp: &[f64], pose: &[f64], cfg: &LossConfig) -> f64 {
        let device = Default::default();
        let n = GRAD_SIZE;
        scalar(self.loss::<F64>(
            from_vec_f64(disp.to_vec(), [1, 1, n, n], &device),
            from_vec_f64(pose.to_vec(), [2, 6], &device),
            cfg,
        ))
    }

    /// Autodiff gradients `(d/d disp, d/d pose)`.
    pub fn analytic(&self, cfg: &LossConfig) -> (Vec<f64>, Vec<f64>) {
        let device = Default::default();
        let n = GRAD_SIZE;
        let disp =
            from_vec_f64::<F64Grad, 4>(self.disp.clone(), [1, 1, n, n], &device).require_grad();
        let pose = from_vec_f64::<F64Grad, 2>(self.pose.clone(), [2, 6], &device).require_grad();
        let grads = self.loss(disp.clone(), pose.clone(), cfg).backward();
        (
            to_vec_f64(disp.grad(&grads).expect("disparity gradient")),
            to_vec_f64(pose.grad(&grads).expect("pose gradient")),
        )
    }

    /// Central finite differences, starting at step `h`. Bilinear cell edges and the
    /// min-reprojection switch make the loss piecewise smooth; when the one-sided quotients
    /// disagree the stencil straddles such a kink, so the step shrinks (down to `h / 100`).
    pub fn numeric(&self, cfg: &LossConfig, h: f64) -> (Vec<f64>, Vec<f64>) {
        let base = self.eval(&self.disp, &self.pose, cfg);
        let at = |which: usize, i: usize, delta: f64| {
            let (mut d, mut p) = (self.disp.clone(), self.pose.clone());
            if which == 0 {
                d[i] += delta;
            } else {
                p[i] += delta;
            }
            self.eval(&d, &p, cfg)
        };
        let central = |which: usize, i: usize| {
            let mut step = h;
            loop {
                let (plus, minus) = (at(which, i, step), at(which, i, -step));
                let (fwd, bwd) = ((plus - base) / step, (base - minus) / step);
                let mid = 0.5 * (fwd + bwd);
                if (fwd - bwd).abs() <= KINK_TOLERANCE * mid.abs().max(1.0) || step <= h / 100.0 {
                    return mid;
                }
                step /= 10.0;
            }
        };
        (
            (0..self.disp.len()).map(|i| central(0, i)).collect(),
            (0..self.pose.len()).map(|i| central(1, i)).collect(),
        )
    }
}

/// Largest one-sided quotient disagreement still read as curvature rather than a kink.
const KINK_TOLERANCE: f64 = 1e-3;

/// `‖a − b‖ / ‖b‖`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// Worst relative gradient errors `(disparity, pose)` over seeded instances and two loss
/// weightings (defaults, and a heavy smoothness weight so that term is exercised too).
pub fn gradient_errors(seeds: &[u64]) -> (f64, f64) {
    let configs = [
        LossConfig::default(),
        LossConfig {
            beta_smooth: 0.5,
            ..Default::default()
        },
    ];
    let mut worst = (0.0f64, 0.0f64);
    for &seed in seeds {
        let inst = GradInstance::random(seed);
        for cfg in &configs {
            let (ad, ap) = inst.analytic(cfg);
            let (nd, np) = inst.numeric(cfg, 1e-5);
            worst.0 = worst.0.max(relative_error(&ad, &nd));
            worst.1 = worst.1.max(relative_error(&ap, &np));
        }
    }
    worst
}

pub fn gradient_checks() -> Check {
    let ((disp, pose), elapsed) = timed(|| gradient_errors(&[0, 1, 2]));
    Check::new(
        "gradient checks",
        disp < 1e-2 && pose < 1e-2 && elapsed < Duration::from_secs(30),
        format!(
            "rel. error disparity {disp:.1e}, pose {pose:.1e} (< 1e-2) on 8x8; {:.1} s (< 30 s)",
            elapsed.as_secs_f64()
        ),
    )
}

/// Photometric loss of a synthetic triplet with depth and poses frozen at ground truth.
pub fn gt_frozen_photometric(scene: &FrameTriplet) -> f64 {
    type B = CpuBackend;
    let device = Default::default();
    let depth = scene.gt_depth.as_ref().expect("synthetic depth");
    let poses = scene.gt_poses.as_ref().expect("synthetic poses");
    let batch = FrameBatch {
        target: scene.frames[1].to_tensor::<B>(&device),
        sources: vec![
            scene.frames[0].to_tensor(&device),
            scene.frames[2].to_tensor(&device),
        ],
        intrinsics: vec![scene.intrinsics],
    };
    let transforms = [
        poses[0].to_transform::<B>(1, &device),
        poses[1].to_transform(1, &device),
    ];
    let min = reprojection(
        &batch,
        depth.to_tensor(&device),
        &transforms,
        0,
        &LossConfig::default(),
    )
    .unwrap();
    scalar(min.mean())
}

// ---------------------------------------------------------------------------------------------
// Network

pub const ARCH_SIZE: (usize, usize) = (640, 192);

pub fn architecture() -> Check {
    let grid = FusionGrid::new(PYRAMID_LEVELS).unwrap();
    let long = grid
        .edges()
        .into_iter()
        .filter(|(a, b)| a.level.abs_diff(b.level) > 1 || b.stage != a.stage + 1)
        .count();

    type B = CpuBackend;
    let device = Default::default();
    let (w, h) = ARCH_SIZE;
    let net = DepthNetConfig::default().init::<B>(&device).unwrap();
    let image = from_vec_f64::<B, 4>(smooth_image(4, h, w), [1, 3, h, w], &device);
    let outputs = net.forward(image).unwrap();
    let shapes: Vec<(usize, usize)> = outputs.iter().map(|d| (d.dims()[3], d.dims()[2])).collect();
    let expected: Vec<(usize, usize)> = (0..4).map(|s| (w >> s, h >> s)).collect();
    let (lo, hi) = outputs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            let v = to_vec_f64(d.clone());
            (
                v.iter().cloned().fold(lo, f64::min),
                v.iter().cloned().fold(hi, f64::max),
            )
        });
    let shapes_ok = shapes == expected && outputs.iter().all(|d| d.dims()[..2] == [1, 1]);
    Check::new(
        "architecture invariants",
        long == 0 && shapes_ok && lo > 0.0 && hi < 1.0,
        format!(
            "{} edges, {long} spanning >1 level; scales {shapes:?}; disparity range [{lo:.4}, {hi:.4}]",
            grid.edges().len()
        ),
    )
}

// ---------------------------------------------------------------------------------------------
// Training

pub const OVERFIT_STEPS: usize = 200;
pub const SMOOTHING_WINDOW: usize = 10;

/// The overfit setting: tiny encoder on a four-scene 64x32 plane dataset.
pub fn overfit_setup(steps: usize) -> (Trainer<TrainBackend>, Vec<FrameTriplet>) {
    let spec = SyntheticSpec {
        width: 64,
        height: 32,
        focal: 50.0,
        count: 4,
        ..Default::default()
    };
    let data = generate_synthetic_dataset(&spec).unwrap();
    let train = TrainConfig {
        epochs: steps,
        lr_drop_epoch: steps,
        batch_size: 2,
        max_steps: Some(steps),
        seed: 7,
        ..Default::default()
    };
    let trainer = Trainer::new(
        DepthNetConfig::tiny(),
        train,
        LossConfig::default(),
        AugmentConfig::default(),
        &Default::default(),
    )
    .unwrap();
    (trainer, data)
}

/// Trailing mean over `SMOOTHING_WINDOW` steps ending at 1-based `step`.
pub fn smoothed(losses: &[f64], step: usize) -> f64 {
    let window = &losses[step.saturating_sub(SMOOTHING_WINDOW)..step];
    window.iter().sum::<f64>() / window.len() as f64
}

pub fn overfit() -> Check {
    let (result, elapsed) = timed(|| {
        let (mut trainer, data) = overfit_setup(OVERFIT_STEPS);
        trainer.fit(&data, None)
    });
    let steps = match result {
        Ok(report) => report.steps,
        Err(e) => return Check::new("overfit smoke test", false, format!("error: {e}")),
    };
    if steps.len() < OVERFIT_STEPS {
        return Check::new(
            "overfit smoke test",
            false,
            format!("only {} steps ran", steps.len()),
        );
    }
    let photo: Vec<f64> = steps.iter().map(|s| s.photometric).collect();
    let (early, late) = (smoothed(&photo, 10), smoothed(&photo, OVERFIT_STEPS));
    let drop = 1.0 - late / early;
    Check::new(
        "overfit smoke test",
        drop >= 0.3 && elapsed < Duration::from_secs(600),
        format!(
            "smoothed photometric {early:.5} at step 10 -> {late:.5} at step {OVERFIT_STEPS} ({:.1}% drop, >= 30%); {:.0} s (< 600 s)",
            100.0 * drop,
            elapsed.as_secs_f64()
        ),
    )
}

/// Trains twice into separate run directories and compares the metric logs byte for byte.
pub fn reproducibility(root: &Path) -> Check {
    let run = |name: &str| -> Result<(Vec<u8>, usize), String> {
        let dir = root.join(name);
        let (mut trainer, data) = overfit_setup(4);
        trainer.fit(&data, Some(&dir)).map_err(|e| e.to_string())?;
        let path = dir.join(METRICS_FILE);
        let rows = read_metrics(&path).map_err(|e| e.to_string())?.len();
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        Ok((bytes, rows))
    };
    match (run("a"), run("b")) {
        (Ok((a, rows)), Ok((b, _))) => Check::new(
            "reproducibility",
            a == b && rows > 0,
            format!(
                "{rows} logged steps per run; logs {}",
                if a == b { "identical" } else { "differ" }
            ),
        ),
        (Err(e), _) | (_, Err(e)) => Check::new("reproducibility", false, format!("error: {e}")),
    }
}

// ---------------------------------------------------------------------------------------------
// Evaluation

pub fn metric_oracle() -> Check {
    let (h, w) = (20, 30);
    let gt: Vec<f32> = (0..h * w).map(|i| 1.0 + (i % 97) as f32 * 0.37).collect();
    let gt = DepthMap::new(h, w, gt).unwrap();
    let doubled = DepthMap::new(h, w, gt.data.iter().map(|d| 2.0 * d).collect()).unwrap();
    let scaled = EvalProtocol {
        crop: EvalCrop::None,
        ..Default::default()
    };
    let raw = EvalProtocol {
        median_scaling: false,
        ..scaled.clone()
    };
    let perfect = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let run = |p: &DepthMap, protocol: &EvalProtocol| {
        compute_metrics(p, &gt, protocol).map(|m: DepthMetrics| m.to_array())
    };
    match (
        run(&gt, &scaled),
        run(&doubled, &raw),
        run(&doubled, &scaled),
    ) {
        (Ok(same), Ok(twice), Ok(rescaled)) => {
            let ok = same == perfect
                && (twice[0] - 1.0).abs() <= 1e-6
                && twice[4] == 0.0
                && rescaled == perfect;
            Check::new(
                "metric oracle",
                ok,
                format!(
                    "pred=gt {same:?}; 2*gt abs_rel {:.7} delta1 {}; 2*gt median-scaled {rescaled:?}",
                    twice[0], twice[4]
                ),
            )
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
            Check::new("metric oracle", false, format!("error: {e}"))
        }
    }
}

pub const PAPER_PARAMS_RANGE: (f64, f64) = (3.3e6, 5.0e6);
pub const PAPER_GMACS: f64 = 9.87;
pub const GMACS_TOLERANCE: f64 = 0.4;

pub fn complexity() -> Check {
    let ((params, gmacs), elapsed) = timed(|| {
        let net = DepthNetConfig::default()
            .init::<CpuBackend>(&Default::default())
            .unwrap();
        let (w, h) = ARCH_SIZE;
        let report = estimate_flops(&net, h, w);
        (report.params as f64, report.gmacs(false))
    });
    let params_ok = (PAPER_PARAMS_RANGE.0..=PAPER_PARAMS_RANGE.1).contains(&params);
    let gmacs_ok = (gmacs / PAPER_GMACS - 1.0).abs() <= GMACS_TOLERANCE;
    let time_ok = elapsed < Duration::from_secs(60);
    Check::new(
        "complexity claim",
        params_ok && gmacs_ok && time_ok,
        format!(
            "params {:.3}M in [3.3M, 5.0M]: {}; {gmacs:.3} GMACs at 640x192 vs 9.87 +-40%: {}; {:.1} s (< 60 s)",
            params / 1e6,
            if params_ok { "ok" } else { "no" },
            if gmacs_ok { "ok" } else { "no" },
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------------------------
// Data

pub const CANONICAL_COUNTS: (usize, usize, usize) = (39810, 4424, 697);
pub const SPLITS_ENV: &str = "KITTI_SPLITS_DIR";

/// Needs the canonical split lists; their directory is taken from `KITTI_SPLITS_DIR`.
pub fn split_protocol() -> Check {
    let Some(dir) = std::env::var_os(SPLITS_ENV) else {
        return Check::new(
            "split protocol",
            false,
            format!("canonical split lists not available (set {SPLITS_ENV})"),
        );
    };
    match load_split(Path::new(&dir)) {
        Ok(m) => {
            let counts = m.counts();
            Check::new(
                "split protocol",
                counts == CANONICAL_COUNTS,
                format!("counts {counts:?}, expected {CANONICAL_COUNTS:?}"),
            )
        }
        Err(e) => Check::new("split protocol", false, format!("error: {e}")),
    }
}
