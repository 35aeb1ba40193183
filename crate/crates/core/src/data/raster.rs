//! Planar RGB images with values in `[0, 1]`.

use std::path::Path;

use burn::tensor::{backend::Backend, Tensor};
use image::imageops::{self, FilterType};
use image::{ImageBuffer, Rgb, Rgb32FImage};

use crate::error::{ensure, Error, Result};
use crate::tensor_util;

/// Channel-planar (`C x H x W`) RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(width >= 1 && height >= 1, "image must be non-empty");
        ensure!(
            data.len() == 3 * width * height,
            "RGB buffer has {} values, expected 3x{height}x{width}",
            data.len()
        );
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a per-pixel function returning RGB.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Self {
        let plane = width * height;
        let mut data = vec![0.0; 3 * plane];
        for v in 0..height {
            for u in 0..width {
                let px = f(u, v);
                for c in 0..3 {
                    data[c * plane + v * width + u] = px[c];
                }
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn at(&self, channel: usize, v: usize, u: usize) -> f32 {
        self.data[channel * self.width * self.height + v * self.width + u]
    }

    pub fn pixel(&self, u: usize, v: usize) -> [f32; 3] {
        [self.at(0, v, u), self.at(1, v, u), self.at(2, v, u)]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image {
                path: path.to_path_buf(),
                source,
            },
        })?;
        Ok(Self::from_buffer(&img.to_rgb32f()))
    }

    fn from_buffer(buf: &Rgb32FImage) -> Self {
        Self::from_fn(buf.width() as usize, buf.height() as usize, |u, v| {
            buf.get_pixel(u as u32, v as u32)
                .0
                .map(|x| x.clamp(0.0, 1.0))
        })
    }

    fn to_buffer(&self) -> Rgb32FImage {
        ImageBuffer::from_fn(self.width as u32, self.height as u32, |u, v| {
            Rgb(self.pixel(u as usize, v as usize))
        })
    }

    /// Bilinear (triangle filter) resampling.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        Self::from_buffer(&imageops::resize(
            &self.to_buffer(),
            width as u32,
            height as u32,
            FilterType::Triangle,
        ))
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |u, v| {
            self.pixel(self.width - 1 - u, v)
        })
    }

    /// Writes an 8-bit PNG, or a 16-bit one when `deep` is set.
    pub fn save_png(&self, path: &Path, deep: bool) -> Result<()> {
        let (w, h) = (self.width as u32, self.height as u32);
        let result = if deep {
            ImageBuffer::<Rgb<u16>, _>::from_fn(w, h, |u, v| {
                Rgb(self
                    .pixel(u as usize, v as usize)
                    .map(|x| (x.clamp(0.0, 1.0) * 65535.0).round() as u16))
            })
            .save(path)
        } else {
            ImageBuffer::<Rgb<u8>, _>::from_fn(w, h, |u, v| {
                Rgb(self
                    .pixel(u as usize, v as usize)
                    .map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8))
            })
            .save(path)
        };
        result.map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// `[1, 3, H, W]`
    pub fn to_tensor<B: Backend>(&self, device: &B::Device) -> Tensor<B, 4> {
        tensor_util::from_vec(self.data.clone(), [1, 3, self.height, self.width], device)
    }

    /// Stacks congruent images into `[N, 3, H, W]`.
    pub fn batch<B: Backend>(images: &[&RgbImage], device: &B::Device) -> Result<Tensor<B, 4>> {
        ensure!(!images.is_empty(), "cannot batch zero images");
        let (w, h) = (images[0].width, images[0].height);
        ensure!(
            images.iter().all(|i| i.width == w && i.height == h),
            "images in a batch must share a size"
        );
        let data = images.iter().flat_map(|i| i.data.iter().copied()).collect();
        Ok(tensor_util::from_vec(data, [images.len(), 3, h, w], device))
    }

    pub fn mean_abs_diff(&self, other: &RgbImage) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        sum / self.data.len() as f64
    }
}
