//! Fronto-parallel textured planes seen by three cameras translated along x.
//!
//! Cameras sit at `x = -b, 0, +b` for frames `t-1, t, t+1`, all looking down +z at a plane at
//! depth `d`. The texture is a sum of smooth sinusoids defined on the plane, so a plane point
//! shows the same colour in every view and neighbouring frames differ by a horizontal shift of
//! `f * b / d` pixels.

use std::f64::consts::TAU;
use std::path::Path;

use burn::tensor::{backend::Backend, ElementConversion, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{depth_io, FrameTriplet, RgbImage};
use crate::error::{ensure, Error, Result};
use crate::geometry::{backproject, project, warp, DepthMap, Intrinsics, PixelGrid, Pose};

const WAVES_PER_CHANNEL: usize = 4;
/// Shortest and longest texture wavelength in pixels; long waves keep bilinear sampling exact
/// to well under 1e-3.
const WAVELENGTH_PX: (f64, f64) = (16.0, 48.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Plane depth in metres.
    pub depth: f64,
    pub texture_seed: u64,
    /// Camera spacing in metres.
    pub baseline: f64,
    /// Focal length in pixels.
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    /// Number of scenes; scene `i` uses texture seed `texture_seed + i`.
    pub count: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            depth: 10.0,
            texture_seed: 0,
            baseline: 0.5,
            focal: 100.0,
            width: 128,
            height: 64,
            count: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.depth > 0.0 && self.depth.is_finite(),
            "plane depth must be positive"
        );
        ensure!(
            self.focal > 0.0 && self.focal.is_finite(),
            "focal length must be positive"
        );
        ensure!(self.baseline.is_finite(), "baseline must be finite");
        ensure!(
            self.width >= 2 && self.height >= 2,
            "image must be at least 2x2"
        );
        ensure!(self.count >= 1, "count must be at least 1");
        Ok(())
    }

    /// Horizontal pixel shift between neighbouring frames.
    pub fn pixel_shift(&self) -> f64 {
        self.focal * self.baseline / self.depth
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amplitude: f64,
}

fn texture(seed: u64) -> [Vec<Wave>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::array::from_fn(|_| {
        (0..WAVES_PER_CHANNEL)
            .map(|_| {
                let lambda = rng.gen_range(WAVELENGTH_PX.0..WAVELENGTH_PX.1);
                let angle = rng.gen_range(0.0..TAU);
                Wave {
                    kx: angle.cos() / lambda,
                    ky: angle.sin() / lambda,
                    phase: rng.gen_range(0.0..TAU),
                    amplitude: rng.gen_range(0.05..0.1),
                }
            })
            .collect()
    })
}

/// Renders the view of the camera at `x = offset` metres.
fn render(spec: &SyntheticSpec, waves: &[Vec<Wave>; 3], offset: f64) -> RgbImage {
    let k = spec.intrinsics().expect("validated spec");
    // Texture coordinates are plane positions expressed in pixels of the reference view.
    let shift = offset * spec.focal / spec.depth;
    RgbImage::from_fn(spec.width, spec.height, |u, v| {
        let s = u as f64 - k.cx + shift;
        let t = v as f64 - k.cy;
        std::array::from_fn(|c| {
            let value: f64 = 0.5
                + waves[c]
                    .iter()
                    .map(|w| w.amplitude * (TAU * (w.kx * s + w.ky * t) + w.phase).sin())
                    .sum::<f64>();
            value as f32
        })
    })
}

/// Scene `index` of a spec, with exact depth and poses.
///
/// `gt_poses` are `[T_{t->t-1}, T_{t->t+1}]` = translations `(+b, 0, 0)` and `(-b, 0, 0)`.
pub fn generate_synthetic_scene(spec: &SyntheticSpec, index: usize) -> Result<FrameTriplet> {
    spec.validate()?;
    let waves = texture(spec.texture_seed.wrapping_add(index as u64));
    let b = spec.baseline;
    Ok(FrameTriplet {
        frames: [
            render(spec, &waves, -b),
            render(spec, &waves, 0.0),
            render(spec, &waves, b),
        ],
        intrinsics: spec.intrinsics()?,
        gt_depth: Some(DepthMap::constant(
            spec.height,
            spec.width,
            spec.depth as f32,
        )),
        gt_poses: Some([
            Pose::from_translation([b, 0.0, 0.0]),
            Pose::from_translation([-b, 0.0, 0.0]),
        ]),
    })
}

pub fn generate_synthetic_dataset(spec: &SyntheticSpec) -> Result<Vec<FrameTriplet>> {
    (0..spec.count)
        .map(|i| generate_synthetic_scene(spec, i))
        .collect()
}

/// Mean absolute colour error between the target and each source warped into it with the
/// ground-truth depth and poses, over pixels that land inside the source.
pub fn gt_warp_residual<B: Backend>(
    triplet: &FrameTriplet,
    device: &B::Device,
) -> Result<[f64; 2]> {
    let depth = triplet
        .gt_depth
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("triplet has no ground-truth depth".into()))?;
    let poses = triplet
        .gt_poses
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("triplet has no ground-truth poses".into()))?;
    triplet.validate()?;
    let (h, w) = (depth.height, depth.width);
    let k = &triplet.intrinsics;
    let d = Tensor::<B, 1>::from_floats(depth.data.as_slice(), device).reshape([1, 1, h, w]);
    let points = backproject(d, k.inverse_tensor(1, device), &PixelGrid::new(h, w))?;
    let target = triplet.target().to_tensor::<B>(device);
    let mut out = [0.0; 2];
    for (slot, (source, pose)) in out.iter_mut().zip(
        [&triplet.frames[0], &triplet.frames[2]]
            .into_iter()
            .zip(poses),
    ) {
        let projection = project(
            points.clone(),
            &pose.to_transform(1, device),
            k.to_tensor(1, device),
            h,
            w,
        )?;
        let synth = warp(source.to_tensor::<B>(device), &projection)?;
        let mask = synth.mask.float().reshape([1, 1, h, w]);
        let valid = mask.clone().sum().into_scalar().elem::<f64>();
        ensure!(
            valid > 0.0,
            "no target pixel projects inside the source frame"
        );
        let err = ((synth.image - target.clone()).abs() * mask)
            .sum()
            .into_scalar()
            .elem::<f64>();
        *slot = err / (3.0 * valid);
    }
    Ok(out)
}

const FRAME_NAMES: [&str; 3] = ["prev.png", "target.png", "next.png"];

pub fn scene_dir(root: &Path, index: usize) -> std::path::PathBuf {
    root.join(format!("scene_{index:04}"))
}

/// Writes `scene_NNNN/{prev,target,next}.png` (16-bit), `depth.f32` with its sidecar,
/// `intrinsics.json` and `poses.json`, plus the spec at the root.
pub fn save_dataset(root: &Path, spec: &SyntheticSpec, scenes: &[FrameTriplet]) -> Result<()> {
    let write = |p: &Path, text: String| std::fs::write(p, text).map_err(|e| Error::io(p, e));
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    write(
        &root.join("spec.json"),
        serde_json::to_string_pretty(spec).expect("spec serialises"),
    )?;
    for (i, scene) in scenes.iter().enumerate() {
        let dir = scene_dir(root, i);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (frame, name) in scene.frames.iter().zip(FRAME_NAMES) {
            frame.save_png(&dir.join(name), true)?;
        }
        write(
            &dir.join("intrinsics.json"),
            serde_json::to_string_pretty(&scene.intrinsics).expect("intrinsics serialise"),
        )?;
        if let Some(depth) = &scene.gt_depth {
            depth_io::save_raster(
                &dir.join("depth.f32"),
                depth.width,
                depth.height,
                &depth.data,
                "m",
            )?;
        }
        if let Some(poses) = &scene.gt_poses {
            write(
                &dir.join("poses.json"),
                serde_json::to_string_pretty(poses).expect("poses serialise"),
            )?;
        }
    }
    Ok(())
}

/// Reads every `scene_NNNN` directory written by [`save_dataset`], in order.
pub fn load_dataset(root: &Path) -> Result<Vec<FrameTriplet>> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let json_err = |p: &Path, e: serde_json::Error| Error::Format {
        what: "synthetic scene",
        path: p.to_path_buf(),
        message: e.to_string(),
    };
    let mut scenes = Vec::new();
    for i in 0.. {
        let dir = scene_dir(root, i);
        if !dir.is_dir() {
            break;
        }
        let frames = [0, 1, 2].map(|k| RgbImage::load(&dir.join(FRAME_NAMES[k])));
        let [a, b, c] = frames;
        let k_path = dir.join("intrinsics.json");
        let intrinsics: Intrinsics =
            serde_json::from_str(&read(&k_path)?).map_err(|e| json_err(&k_path, e))?;
        intrinsics.validate()?;
        let depth = dir.join("depth.f32");
        let poses = dir.join("poses.json");
        scenes.push(FrameTriplet {
            frames: [a?, b?, c?],
            intrinsics,
            gt_depth: depth
                .is_file()
                .then(|| depth_io::load_raster(&depth))
                .transpose()?,
            gt_poses: match poses.is_file() {
                true => {
                    Some(serde_json::from_str(&read(&poses)?).map_err(|e| json_err(&poses, e))?)
                }
                false => None,
            },
        });
    }
    ensure!(
        !scenes.is_empty(),
        "no scene_NNNN directories under {}",
        root.display()
    );
    Ok(scenes)
}
