//! Frame-level evaluation over a manifest, with per-frame CSV and summary JSON reports.

use std::path::{Path, PathBuf};

use burn::tensor::backend::Backend;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, DepthMetrics, EvalProtocol};
use crate::data::kitti::{find_gt_depth, find_image};
use crate::data::{depth_io, FrameId, FrameTriplet, RgbImage};
use crate::error::{ensure, Error, Result};
use crate::geometry::DepthMap;
use crate::network::{Checkpoint, DepthNet};
use crate::training::{disp_to_depth_tensor, TrainConfig};

pub const FRAME_CSV: &str = "per_frame.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Bilinear resize of a depth map with pixel-centre alignment.
pub fn resize_depth(map: &DepthMap, height: usize, width: usize) -> DepthMap {
    if (map.height, map.width) == (height, width) {
        return map.clone();
    }
    // Source coordinate and blend weight along one axis.
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|i| {
                let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let x0 = x.floor() as usize;
                (x0, (x0 + 1).min(n_in - 1), (x - x0 as f64) as f32)
            })
            .collect()
    };
    let rows = taps(map.height, height);
    let cols = taps(map.width, width);
    let at = |v: usize, u: usize| map.data[v * map.width + u];
    let mut data = Vec::with_capacity(height * width);
    for &(v0, v1, fy) in &rows {
        for &(u0, u1, fx) in &cols {
            let top = at(v0, u0) * (1.0 - fx) + at(v0, u1) * fx;
            let bottom = at(v1, u0) * (1.0 - fx) + at(v1, u1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    DepthMap {
        height,
        width,
        data,
    }
}

/// Runs a depth network at a fixed resolution and maps its finest disparity to metric depth.
#[derive(Debug)]
pub struct DepthPredictor<B: Backend> {
    pub net: DepthNet<B>,
    pub width: usize,
    pub height: usize,
    pub min_depth: f64,
    pub max_depth: f64,
    device: B::Device,
}

impl<B: Backend> DepthPredictor<B> {
    pub fn new(
        net: DepthNet<B>,
        (width, height): (usize, usize),
        (min_depth, max_depth): (f64, f64),
        device: &B::Device,
    ) -> Result<Self> {
        let d = DepthNet::<B>::DIVISOR;
        ensure!(
            width > 0 && height > 0 && width % d == 0 && height % d == 0,
            "inference resolution {width}x{height} must be divisible by {d}"
        );
        ensure!(
            0.0 < min_depth && min_depth < max_depth,
            "need 0 < min_depth < max_depth"
        );
        Ok(Self {
            net,
            width,
            height,
            min_depth,
            max_depth,
            device: device.clone(),
        })
    }

    /// Depth network and depth range stored in a training checkpoint.
    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        resolution: (usize, usize),
        device: &B::Device,
    ) -> Result<Self> {
        let model = ckpt.load_model::<B>(device)?;
        let train: TrainConfig = ckpt
            .manifest
            .extra
            .get("train")
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()
            .map_err(|e| Error::Checkpoint(format!("bad training config in manifest: {e}")))?
            .unwrap_or_default();
        Self::new(
            model.depth,
            resolution,
            (train.min_depth, train.max_depth),
            device,
        )
    }

    /// Finest-scale disparity at the network resolution, row-major.
    pub fn disparity(&self, image: &RgbImage) -> Result<DepthMap> {
        let x = image
            .resize(self.width, self.height)
            .to_tensor::<B>(&self.device);
        let disp = self.net.forward(x)?.swap_remove(0);
        let data = disp
            .into_data()
            .convert::<f32>()
            .to_vec::<f32>()
            .expect("f32 tensor data");
        DepthMap::new(self.height, self.width, data)
    }

    /// Metric depth at the image's own resolution.
    pub fn predict(&self, image: &RgbImage) -> Result<DepthMap> {
        let x = image
            .resize(self.width, self.height)
            .to_tensor::<B>(&self.device);
        let disp = self.net.forward(x)?.swap_remove(0);
        let depth = disp_to_depth_tensor(disp, self.min_depth, self.max_depth);
        let data = depth
            .into_data()
            .convert::<f32>()
            .to_vec::<f32>()
            .expect("f32 tensor data");
        let map = DepthMap::new(self.height, self.width, data)?;
        Ok(resize_depth(&map, image.height, image.width))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame_id: String,
    pub metrics: DepthMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFrame {
    pub frame_id: String,
    pub reason: String,
}

/// Model size reported next to the accuracy row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySummary {
    pub params: usize,
    pub gmacs: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub protocol: EvalProtocol,
    pub frames: usize,
    pub evaluated: usize,
    pub skipped: Vec<SkippedFrame>,
    /// Uniform mean over evaluated frames.
    pub mean: Option<DepthMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<ComplexitySummary>,
}

impl EvalSummary {
    pub fn skipped_fraction(&self) -> f64 {
        if self.frames == 0 {
            return 1.0;
        }
        self.skipped.len() as f64 / self.frames as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub frames: Vec<FrameResult>,
    pub summary: EvalSummary,
}

impl EvalReport {
    /// Aggregates per-frame outcomes; failed frames are skipped with a warning.
    pub fn from_outcomes(
        protocol: &EvalProtocol,
        outcomes: impl IntoIterator<Item = (String, Result<DepthMetrics>)>,
    ) -> Self {
        let mut frames = Vec::new();
        let mut skipped = Vec::new();
        for (frame_id, outcome) in outcomes {
            match outcome {
                Ok(metrics) => frames.push(FrameResult { frame_id, metrics }),
                Err(e) => {
                    log::warn!("skipping {frame_id}: {e}");
                    skipped.push(SkippedFrame {
                        frame_id,
                        reason: e.to_string(),
                    });
                }
            }
        }
        let per_frame: Vec<DepthMetrics> = frames.iter().map(|f| f.metrics).collect();
        let summary = EvalSummary {
            protocol: protocol.clone(),
            frames: frames.len() + skipped.len(),
            evaluated: frames.len(),
            skipped,
            mean: DepthMetrics::mean(&per_frame),
            complexity: None,
        };
        Self { frames, summary }
    }

    /// Writes `per_frame.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(FRAME_CSV);
        let csv_err = |e: csv::Error| Error::Format {
            what: "per-frame csv",
            path: csv_path.clone(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
        let mut header = vec!["frame_id"];
        header.extend(DepthMetrics::NAMES);
        w.write_record(&header).map_err(csv_err)?;
        for f in &self.frames {
            let mut row = vec![f.frame_id.clone()];
            row.extend(f.metrics.to_array().iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;

        let json_path = dir.join(SUMMARY_JSON);
        let text = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
        Ok((csv_path, json_path))
    }
}

fn missing(what: &str, id: &FrameId) -> Error {
    Error::InvalidArgument(format!("no {what} for frame {id}"))
}

/// Evaluates precomputed depth files laid out like the ground truth
/// (`<root>/<sequence>/image_0{2,3}/<index>.{png,f32}`).
pub fn evaluate_predictions(
    pred_root: &Path,
    gt_root: &Path,
    ids: &[FrameId],
    protocol: &EvalProtocol,
) -> EvalReport {
    let outcomes = ids.iter().map(|id| {
        let outcome = (|| {
            let gt = depth_io::load_depth(
                &find_gt_depth(gt_root, id).ok_or_else(|| missing("ground truth", id))?,
            )?;
            let pred = depth_io::load_depth(
                &find_gt_depth(pred_root, id).ok_or_else(|| missing("prediction", id))?,
            )?;
            compute_metrics(&resize_depth(&pred, gt.height, gt.width), &gt, protocol)
        })();
        (id.to_string(), outcome)
    });
    EvalReport::from_outcomes(protocol, outcomes.collect::<Vec<_>>())
}

/// Runs `predictor` on each manifest frame under `data_root` and scores it against `gt_root`.
pub fn evaluate_checkpoint<B: Backend>(
    predictor: &DepthPredictor<B>,
    data_root: &Path,
    gt_root: &Path,
    ids: &[FrameId],
    protocol: &EvalProtocol,
) -> EvalReport {
    let outcomes = ids.iter().map(|id| {
        let outcome = (|| {
            let gt = depth_io::load_depth(
                &find_gt_depth(gt_root, id).ok_or_else(|| missing("ground truth", id))?,
            )?;
            let image =
                RgbImage::load(&find_image(data_root, id).ok_or_else(|| missing("image", id))?)?;
            let pred = predictor.predict(&image)?;
            compute_metrics(&resize_depth(&pred, gt.height, gt.width), &gt, protocol)
        })();
        (id.to_string(), outcome)
    });
    EvalReport::from_outcomes(protocol, outcomes.collect::<Vec<_>>())
}

/// Scores target-frame predictions on in-memory triplets that carry ground truth.
pub fn evaluate_triplets<B: Backend>(
    predictor: &DepthPredictor<B>,
    triplets: &[FrameTriplet],
    protocol: &EvalProtocol,
) -> EvalReport {
    let outcomes = triplets.iter().enumerate().map(|(i, t)| {
        let outcome = (|| {
            let gt = t
                .gt_depth
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("scene {i} has no ground truth")))?;
            let pred = predictor.predict(t.target())?;
            compute_metrics(&resize_depth(&pred, gt.height, gt.width), gt, protocol)
        })();
        (format!("scene_{i:04}"), outcome)
    });
    EvalReport::from_outcomes(protocol, outcomes.collect::<Vec<_>>())
}
