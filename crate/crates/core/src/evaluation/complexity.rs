//! Parameter and multiply-accumulate accounting.
//!
//! Every network block implements [`Trace`], walking its layers with a [`Tracer`] that records
//! trainable-parameter counts (read from the live weight tensors) and MACs at a given input
//! resolution. Convolutions cost `Kh·Kw·(Cin/groups)·Cout·Hout·Wout`; normalisation,
//! activations, gating and residual additions cost one MAC per output scalar.

use std::collections::BTreeMap;

use burn::module::{Module, ModuleVisitor, ParamId};
use burn::nn::{conv::Conv2d, BatchNorm, Linear, PaddingConfig2d};
use burn::tensor::{backend::Backend, Tensor};
use serde::{Deserialize, Serialize};

/// Channels, height, width of a single (unbatched) feature map.
pub type FeatureShape = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Linear,
    Norm,
    Elementwise,
    Pool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: LayerKind,
    pub params: usize,
    pub macs: u64,
    pub output: FeatureShape,
}

/// Records layer costs while a model is walked.
#[derive(Debug, Default)]
pub struct Tracer {
    scope: Vec<String>,
    layers: Vec<LayerCost>,
}

impl Tracer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `f` with `name` pushed onto the layer-name prefix.
    pub fn scoped<R>(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Self) -> R) -> R {
        self.scope.push(name.into());
        let out = f(self);
        self.scope.pop();
        out
    }

    fn full_name(&self, name: &str) -> String {
        let mut parts = self.scope.clone();
        parts.push(name.to_string());
        parts.join(".")
    }

    fn push(
        &mut self,
        name: &str,
        kind: LayerKind,
        params: usize,
        macs: u64,
        output: FeatureShape,
    ) {
        self.layers.push(LayerCost {
            name: self.full_name(name),
            kind,
            params,
            macs,
            output,
        });
    }

    pub fn conv<B: Backend>(
        &mut self,
        name: &str,
        conv: &Conv2d<B>,
        input: FeatureShape,
    ) -> FeatureShape {
        let [c_out, c_in_per_group, kh, kw] = conv.weight.dims();
        assert_eq!(
            input[0],
            c_in_per_group * conv.groups,
            "{}: expected {} input channels",
            self.full_name(name),
            c_in_per_group * conv.groups
        );
        let (ph, pw) = match &conv.padding.0 {
            PaddingConfig2d::Explicit(ph, pw) => (*ph, *pw),
            PaddingConfig2d::Same => ((kh - 1) / 2, (kw - 1) / 2),
            PaddingConfig2d::Valid => (0, 0),
        };
        let out_dim = |size: usize, k: usize, p: usize, s: usize, d: usize| {
            (size + 2 * p - d * (k - 1) - 1) / s + 1
        };
        let h = out_dim(input[1], kh, ph, conv.stride[0], conv.dilation[0]);
        let w = out_dim(input[2], kw, pw, conv.stride[1], conv.dilation[1]);
        let weights = c_out * c_in_per_group * kh * kw;
        let bias = conv.bias.as_ref().map_or(0, |b| b.dims()[0]);
        let output = [c_out, h, w];
        self.push(
            name,
            LayerKind::Conv,
            weights + bias,
            (weights * h * w) as u64,
            output,
        );
        output
    }

    pub fn batch_norm<B: Backend>(
        &mut self,
        name: &str,
        norm: &BatchNorm<B, 2>,
        input: FeatureShape,
    ) -> FeatureShape {
        let params = norm.gamma.dims()[0] + norm.beta.dims()[0];
        self.push(name, LayerKind::Norm, params, scalars(input), input);
        input
    }

    /// Fully connected layer applied to a pooled `[C, 1, 1]` feature.
    pub fn linear<B: Backend>(
        &mut self,
        name: &str,
        linear: &Linear<B>,
        input: FeatureShape,
    ) -> FeatureShape {
        let [d_in, d_out] = linear.weight.dims();
        assert_eq!(
            input,
            [d_in, 1, 1],
            "{}: expected a pooled {d_in}-vector",
            self.full_name(name)
        );
        let bias = linear.bias.as_ref().map_or(0, |b| b.dims()[0]);
        let output = [d_out, 1, 1];
        self.push(
            name,
            LayerKind::Linear,
            d_in * d_out + bias,
            (d_in * d_out) as u64,
            output,
        );
        output
    }

    /// An elementwise op costing `ops_per_scalar` MACs per output scalar.
    pub fn elementwise(
        &mut self,
        name: &str,
        shape: FeatureShape,
        ops_per_scalar: u64,
    ) -> FeatureShape {
        self.push(
            name,
            LayerKind::Elementwise,
            0,
            ops_per_scalar * scalars(shape),
            shape,
        );
        shape
    }

    /// Global average pooling: one accumulate per input scalar.
    pub fn global_pool(&mut self, name: &str, input: FeatureShape) -> FeatureShape {
        let output = [input[0], 1, 1];
        self.push(name, LayerKind::Pool, 0, scalars(input), output);
        output
    }

    pub fn layers(&self) -> &[LayerCost] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<LayerCost> {
        self.layers
    }
}

fn scalars(shape: FeatureShape) -> u64 {
    (shape[0] * shape[1] * shape[2]) as u64
}

/// Blocks that can report their layer costs.
pub trait Trace {
    fn trace(&self, input: FeatureShape, tracer: &mut Tracer) -> FeatureShape;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleCost {
    pub name: String,
    pub params: usize,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub params: usize,
    pub macs: u64,
    /// `(height, width)` the MACs refer to.
    pub input_size: (usize, usize),
    pub breakdown: Vec<ModuleCost>,
    pub layers: Vec<LayerCost>,
}

impl ComplexityReport {
    /// Aggregates layers by the first `depth` components of their names.
    pub fn from_layers(layers: Vec<LayerCost>, input_size: (usize, usize), depth: usize) -> Self {
        let mut groups: BTreeMap<String, (usize, u64)> = BTreeMap::new();
        let mut order = Vec::new();
        for layer in &layers {
            let key = layer
                .name
                .split('.')
                .take(depth)
                .collect::<Vec<_>>()
                .join(".");
            let entry = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key.clone());
                (0, 0)
            });
            entry.0 += layer.params;
            entry.1 += layer.macs;
        }
        let breakdown = order
            .into_iter()
            .map(|name| {
                let (params, macs) = groups[&name];
                ModuleCost { name, params, macs }
            })
            .collect();
        Self {
            params: layers.iter().map(|l| l.params).sum(),
            macs: layers.iter().map(|l| l.macs).sum(),
            input_size,
            breakdown,
            layers,
        }
    }

    pub fn params_millions(&self) -> f64 {
        self.params as f64 / 1e6
    }

    /// MACs in units of 10⁹, optionally doubled to count multiplies and adds separately.
    pub fn gmacs(&self, two_ops_per_mac: bool) -> f64 {
        let factor = if two_ops_per_mac { 2.0 } else { 1.0 };
        factor * self.macs as f64 / 1e9
    }

    /// Sum over breakdown entries whose name starts with `prefix`.
    pub fn macs_under(&self, prefix: &str) -> u64 {
        self.breakdown
            .iter()
            .filter(|m| m.name.starts_with(prefix))
            .map(|m| m.macs)
            .sum()
    }
}

/// Traces `model` on a `3 x height x width` input.
pub fn estimate_flops<M: Trace>(model: &M, height: usize, width: usize) -> ComplexityReport {
    let mut tracer = Tracer::new();
    model.trace([3, height, width], &mut tracer);
    ComplexityReport::from_layers(tracer.into_layers(), (height, width), 2)
}

/// Parameter part of the complexity report. MAC figures refer to a nominal 1x1-per-pixel
/// walk at `height x width` and can be ignored.
pub fn count_parameters<M: Trace>(model: &M, height: usize, width: usize) -> ComplexityReport {
    estimate_flops(model, height, width)
}

/// Brute-force count: every float tensor the module exposes that currently requires a
/// gradient. Only meaningful on an autodiff backend with unfrozen parameters.
pub fn enumerate_trainable<B: Backend, M: Module<B>>(model: &M) -> usize {
    struct Counter {
        total: usize,
    }
    impl<B: Backend> ModuleVisitor<B> for Counter {
        fn visit_float<const D: usize>(&mut self, _id: ParamId, tensor: &Tensor<B, D>) {
            if tensor.is_require_grad() {
                self.total += tensor.shape().num_elements();
            }
        }
    }
    let mut counter = Counter { total: 0 };
    model.visit(&mut counter);
    counter.total
}

#[cfg(test)]
mod tests {
    use super::*;
    use burn::backend::NdArray;
    use burn::nn::conv::Conv2dConfig;

    type B = NdArray<f32>;

    #[test]
    fn single_conv_params_and_macs() {
        let conv = Conv2dConfig::new([4, 8], [3, 3])
            .with_padding(PaddingConfig2d::Explicit(1, 1))
            .init::<B>(&Default::default());
        let mut t = Tracer::new();
        let out = t.conv("c", &conv, [4, 16, 16]);
        assert_eq!(out, [8, 16, 16]);
        let layer = &t.layers()[0];
        assert_eq!(layer.params, 3 * 3 * 4 * 8 + 8);
        assert_eq!(layer.macs, 3 * 3 * 4 * 8 * 16 * 16);
        assert_eq!(layer.macs, 73_728);
    }

    #[test]
    fn grouped_strided_conv() {
        let conv = Conv2dConfig::new([6, 6], [3, 3])
            .with_groups(6)
            .with_stride([2, 2])
            .with_bias(false)
            .with_padding(PaddingConfig2d::Explicit(1, 1))
            .init::<B>(&Default::default());
        let mut t = Tracer::new();
        assert_eq!(t.conv("dw", &conv, [6, 10, 12]), [6, 5, 6]);
        assert_eq!(t.layers()[0].params, 54);
        assert_eq!(t.layers()[0].macs, 54 * 30);
    }

    #[test]
    fn report_totals_equal_breakdown() {
        let layers = vec![
            LayerCost {
                name: "a.x.1".into(),
                kind: LayerKind::Conv,
                params: 3,
                macs: 10,
                output: [1, 1, 1],
            },
            LayerCost {
                name: "a.y".into(),
                kind: LayerKind::Conv,
                params: 4,
                macs: 20,
                output: [1, 1, 1],
            },
            LayerCost {
                name: "b".into(),
                kind: LayerKind::Elementwise,
                params: 0,
                macs: 5,
                output: [1, 1, 1],
            },
        ];
        let r = ComplexityReport::from_layers(layers, (1, 1), 2);
        assert_eq!(r.params, 7);
        assert_eq!(r.macs, 35);
        assert_eq!(
            r.breakdown.iter().map(|m| m.params).sum::<usize>(),
            r.params
        );
        assert_eq!(r.breakdown.iter().map(|m| m.macs).sum::<u64>(), r.macs);
        assert_eq!(r.breakdown.len(), 3);
        assert_eq!(r.macs_under("a."), 30);
    }
}
