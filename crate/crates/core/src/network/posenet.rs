use burn::module::Module;
use burn::nn::conv::{Conv2d, Conv2dConfig};
use burn::tensor::activation::relu;
use burn::tensor::{backend::Backend, Tensor};

use super::blocks::{conv, conv_forward, small_init};
use crate::error::{ensure, Result};
use crate::evaluation::complexity::{FeatureShape, Trace, Tracer};

/// `(output channels, kernel)` of the stride-2 ReLU trunk.
const TRUNK: [(usize, usize); 5] = [(16, 7), (32, 5), (64, 3), (128, 3), (128, 3)];

/// Regresses the 6-DOF motion `(axis-angle, translation)` from `frame_a` to `frame_b`.
#[derive(Module, Debug)]
pub struct PoseNet<B: Backend> {
    pub trunk: Vec<Conv2d<B>>,
    pub head: Conv2d<B>,
}

impl<B: Backend> PoseNet<B> {
    pub fn new(device: &B::Device) -> Self {
        let mut input = 6;
        let trunk = TRUNK
            .iter()
            .map(|&(output, kernel)| {
                let c = conv([input, output], kernel, 2, 1, true, device);
                input = output;
                c
            })
            .collect();
        let head = Conv2dConfig::new([input, 6], [1, 1])
            .with_initializer(small_init())
            .init(device);
        Self { trunk, head }
    }

    /// Raw regressor output `[N, 6]`, before translation scaling.
    pub fn forward(&self, frame_a: Tensor<B, 4>, frame_b: Tensor<B, 4>) -> Result<Tensor<B, 2>> {
        let (a, b) = (frame_a.dims(), frame_b.dims());
        ensure!(a == b, "pose inputs differ in shape: {a:?} vs {b:?}");
        ensure!(a[1] == 3, "expected 3-channel frames, got {}", a[1]);
        let mut x = Tensor::cat(vec![frame_a, frame_b], 1)
            .sub_scalar(0.45)
            .div_scalar(0.225);
        for c in &self.trunk {
            x = relu(conv_forward(c, x));
        }
        let x = conv_forward(&self.head, x);
        Ok(x.mean_dim(3).mean_dim(2).reshape([a[0], 6]))
    }
}

impl<B: Backend> Trace for PoseNet<B> {
    fn trace(&self, input: FeatureShape, t: &mut Tracer) -> FeatureShape {
        let mut x = [input[0] * 2, input[1], input[2]];
        for (i, c) in self.trunk.iter().enumerate() {
            x = t.conv(&format!("conv{i}"), c, x);
            t.elementwise(&format!("relu{i}"), x, 1);
        }
        x = t.conv("head", &self.head, x);
        t.global_pool("pool", x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_util::to_vec;
    use burn::backend::NdArray;
    use burn::tensor::Distribution;

    type B = NdArray<f32>;

    #[test]
    fn output_shape_finite_and_order_sensitive() {
        let dev = Default::default();
        B::seed(7);
        let net = PoseNet::<B>::new(&dev);
        let a = Tensor::<B, 4>::random([2, 3, 64, 96], Distribution::Default, &dev);
        let b = Tensor::<B, 4>::random([2, 3, 64, 96], Distribution::Default, &dev);
        let ab = net.forward(a.clone(), b.clone()).unwrap();
        assert_eq!(ab.dims(), [2, 6]);
        let ab = to_vec(ab);
        assert!(ab.iter().all(|v| v.is_finite()));
        let ba = to_vec(net.forward(b, a).unwrap());
        assert!(ab.iter().zip(&ba).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn mismatched_frames_are_rejected() {
        let dev = Default::default();
        let net = PoseNet::<B>::new(&dev);
        assert!(net
            .forward(
                Tensor::zeros([1, 3, 32, 32], &dev),
                Tensor::zeros([1, 3, 32, 64], &dev)
            )
            .is_err());
    }
}
