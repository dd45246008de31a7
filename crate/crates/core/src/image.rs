//! Image values and pixel conventions.
//!
//! Images are stored height-major, then width, then channel (HWC, row-major),
//! normalized to `[-1, 1]` with `v = p / 127.5 - 1` for an 8-bit pixel `p`.

use std::ops::Deref;

use candle_core::{DType, Device, Tensor};

use crate::error::{shape_err, Result};

/// Number of color channels of every model-facing image.
pub const CHANNELS: usize = 3;

/// Raw 8-bit pixels in HWC order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(shape_err(
                "raw image buffer",
                height * width * channels,
                data.len(),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }
}

/// A real-valued image. Model-facing images are square with three channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(shape_err(
                "image buffer",
                height * width * channels,
                data.len(),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    /// Checks that this is a `size x size x 3` model-facing image.
    pub fn expect_model_shape(&self, size: usize) -> Result<()> {
        if self.dims() != (size, size, CHANNELS) {
            return Err(shape_err(
                "image",
                format!("{size}x{size}x{CHANNELS}"),
                format!("{}x{}x{}", self.height, self.width, self.channels),
            ));
        }
        Ok(())
    }

    pub fn mean_abs_diff(&self, other: &ImageTensor) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(shape_err(
                "image pair",
                format!("{:?}", self.dims()),
                format!("{:?}", other.dims()),
            ));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// `x - y`, elementwise and unscaled. Values lie in `[-2, 2]` for normalized inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferentialImage(ImageTensor);

impl DifferentialImage {
    pub fn into_inner(self) -> ImageTensor {
        self.0
    }
}

impl Deref for DifferentialImage {
    type Target = ImageTensor;

    fn deref(&self) -> &ImageTensor {
        &self.0
    }
}

pub fn normalize_image(raw: &RawImage, size: usize) -> Result<ImageTensor> {
    if (raw.height, raw.width, raw.channels) != (size, size, CHANNELS) {
        return Err(shape_err(
            "raw image",
            format!("{size}x{size}x{CHANNELS}"),
            format!("{}x{}x{}", raw.height, raw.width, raw.channels),
        ));
    }
    let data = raw.data.iter().map(|&p| p as f32 / 127.5 - 1.0).collect();
    ImageTensor::from_vec(raw.height, raw.width, raw.channels, data)
}

/// Inverse of [`normalize_image`]: rounds half away from zero, clamps to `[0, 255]`.
pub fn denormalize_image(t: &ImageTensor) -> RawImage {
    let data = t
        .data
        .iter()
        .map(|&v| {
            let p = ((v as f64 + 1.0) * 127.5).round();
            if p.is_nan() {
                0
            } else {
                p.clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    RawImage {
        height: t.height,
        width: t.width,
        channels: t.channels,
        data,
    }
}

pub fn differential(x: &ImageTensor, y: &ImageTensor) -> Result<DifferentialImage> {
    if x.dims() != y.dims() {
        return Err(shape_err(
            "differential operands",
            format!("{:?}", x.dims()),
            format!("{:?}", y.dims()),
        ));
    }
    let data = x.data.iter().zip(&y.data).map(|(a, b)| a - b).collect();
    Ok(DifferentialImage(ImageTensor {
        height: x.height,
        width: x.width,
        channels: x.channels,
        data,
    }))
}

/// Stacks HWC images into an `(B, C, H, W)` tensor.
pub fn images_to_tensor(images: &[&ImageTensor], dtype: DType) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(shape_err("image batch", "at least one image", 0));
    };
    let (h, w, c) = first.dims();
    let mut buf = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        if img.dims() != (h, w, c) {
            return Err(shape_err(
                "image batch member",
                format!("{h}x{w}x{c}"),
                format!("{:?}", img.dims()),
            ));
        }
        for ch in 0..c {
            buf.extend((0..h * w).map(|p| img.data[p * c + ch]));
        }
    }
    Ok(Tensor::from_vec(buf, (images.len(), c, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Splits an `(B, C, H, W)` tensor back into HWC images.
pub fn tensor_to_images(t: &Tensor) -> Result<Vec<ImageTensor>> {
    let (b, c, h, w) = t.dims4()?;
    let flat = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        let base = i * c * h * w;
        let mut data = vec![0.0f32; h * w * c];
        for ch in 0..c {
            for p in 0..h * w {
                data[p * c + ch] = flat[base + ch * h * w + p];
            }
        }
        out.push(ImageTensor::from_vec(h, w, c, data)?);
    }
    Ok(out)
}
