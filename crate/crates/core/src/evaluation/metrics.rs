//! The seven standard depth metrics and the protocol they are computed under.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::DepthMap;

/// Garg crop as fractions of the ground-truth height and width.
pub const GARG_CROP: [f64; 4] = [0.408_108_11, 0.991_891_89, 0.035_947_71, 0.964_052_29];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalCrop {
    Eigen,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalProtocol {
    pub median_scaling: bool,
    pub min_depth: f64,
    pub cap: f64,
    pub crop: EvalCrop,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            median_scaling: true,
            min_depth: 1e-3,
            cap: 80.0,
            crop: EvalCrop::Eigen,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            0.0 < self.min_depth && self.min_depth < self.cap,
            "evaluation needs 0 < min_depth < cap, got {} and {}",
            self.min_depth,
            self.cap
        );
        Ok(())
    }

    /// Pixel window `(rows, cols)` kept for an `height×width` ground-truth map.
    pub fn window(
        &self,
        height: usize,
        width: usize,
    ) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        match self.crop {
            EvalCrop::None => (0..height, 0..width),
            EvalCrop::Eigen => {
                let [r0, r1, c0, c1] = GARG_CROP;
                let at = |f: f64, n: usize| (f * n as f64) as usize;
                (at(r0, height)..at(r1, height), at(c0, width)..at(c1, width))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl DepthMetrics {
    pub const NAMES: [&'static str; 7] = [
        "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3",
    ];

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            abs_rel: a[0],
            sq_rel: a[1],
            rmse: a[2],
            rmse_log: a[3],
            delta1: a[4],
            delta2: a[5],
            delta3: a[6],
        }
    }

    /// Uniform average over frames; `None` for an empty slice.
    pub fn mean(frames: &[DepthMetrics]) -> Option<Self> {
        if frames.is_empty() {
            return None;
        }
        let mut sum = [0.0; 7];
        for f in frames {
            for (s, v) in sum.iter_mut().zip(f.to_array()) {
                *s += v;
            }
        }
        Some(Self::from_array(sum.map(|s| s / frames.len() as f64)))
    }

    /// One row in the usual column order, three decimals each.
    pub fn row(&self) -> String {
        self.to_array().map(|v| format!("{v:.3}")).join(" | ")
    }
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Metrics of `pred` against `gt` over the valid, cropped pixels.
///
/// A pixel is valid when `min_depth < gt < cap`. With median scaling the prediction is
/// first multiplied by `median(gt) / median(pred)`; predictions are then clamped to
/// `[min_depth, cap]`.
pub fn compute_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    protocol: &EvalProtocol,
) -> Result<DepthMetrics> {
    protocol.validate()?;
    ensure!(
        (pred.height, pred.width) == (gt.height, gt.width),
        "prediction is {}x{} but ground truth is {}x{}",
        pred.width,
        pred.height,
        gt.width,
        gt.height
    );
    let (rows, cols) = protocol.window(gt.height, gt.width);
    let mut p = Vec::new();
    let mut g = Vec::new();
    for v in rows {
        for u in cols.clone() {
            let i = v * gt.width + u;
            let d = gt.data[i] as f64;
            if d > protocol.min_depth && d < protocol.cap {
                g.push(d);
                p.push(pred.data[i] as f64);
            }
        }
    }
    ensure!(
        !g.is_empty(),
        "ground truth has no valid pixel after crop and cap"
    );

    if protocol.median_scaling {
        let mg = median(&mut g.clone()).expect("non-empty");
        let mp = median(&mut p.clone()).expect("non-empty");
        ensure!(
            mp > 0.0,
            "median prediction must be positive for median scaling, got {mp}"
        );
        let ratio = mg / mp;
        p.iter_mut().for_each(|x| *x *= ratio);
    }
    p.iter_mut()
        .for_each(|x| *x = x.clamp(protocol.min_depth, protocol.cap));

    let n = g.len() as f64;
    let mut acc = [0.0; 7];
    for (&p, &g) in p.iter().zip(&g) {
        let diff = p - g;
        let ratio = (p / g).max(g / p);
        acc[0] += diff.abs() / g;
        acc[1] += diff * diff / g;
        acc[2] += diff * diff;
        acc[3] += (p.ln() - g.ln()).powi(2);
        acc[4] += f64::from(u8::from(ratio < 1.25));
        acc[5] += f64::from(u8::from(ratio < 1.25f64.powi(2)));
        acc[6] += f64::from(u8::from(ratio < 1.25f64.powi(3)));
    }
    let m = acc.map(|a| a / n);
    Ok(DepthMetrics {
        abs_rel: m[0],
        sq_rel: m[1],
        rmse: m[2].sqrt(),
        rmse_log: m[3].sqrt(),
        delta1: m[4],
        delta2: m[5],
        delta3: m[6],
    })
}
