//! Conversions between plain buffers and backend tensors.

use burn::tensor::{backend::Backend, Bool, Tensor, TensorData};

pub fn from_vec<B: Backend, const D: usize>(
    values: Vec<f32>,
    shape: [usize; D],
    device: &B::Device,
) -> Tensor<B, D> {
    let data = TensorData::new(values, shape).convert::<B::FloatElem>();
    Tensor::from_data(data, device)
}

pub fn from_vec_f64<B: Backend, const D: usize>(
    values: Vec<f64>,
    shape: [usize; D],
    device: &B::Device,
) -> Tensor<B, D> {
    let data = TensorData::new(values, shape).convert::<B::FloatElem>();
    Tensor::from_data(data, device)
}

pub fn to_vec<B: Backend, const D: usize>(tensor: Tensor<B, D>) -> Vec<f32> {
    tensor
        .into_data()
        .convert::<f32>()
        .to_vec::<f32>()
        .expect("float tensor data")
}

pub fn to_vec_f64<B: Backend, const D: usize>(tensor: Tensor<B, D>) -> Vec<f64> {
    tensor
        .into_data()
        .convert::<f64>()
        .to_vec::<f64>()
        .expect("float tensor data")
}

pub fn mask_to_vec<B: Backend, const D: usize>(mask: Tensor<B, D, Bool>) -> Vec<bool> {
    mask.into_data().to_vec::<bool>().expect("bool tensor data")
}

pub fn scalar<B: Backend>(tensor: Tensor<B, 1>) -> f64 {
    to_vec_f64(tensor)[0]
}
