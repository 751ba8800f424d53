//! Float image containers, color conversions and intrinsic composition.

mod color;
mod ops;

pub use color::{
    luv_from_linear, rgb_to_grayscale, rgb_to_luv, srgb_decode, srgb_decode_value, srgb_encode,
    srgb_encode_value, GRAY_WEIGHTS,
};
pub use ops::{compose, crop, reflect_pad, resize, resize_max_dim, retexture};

use thiserror::Error;

use crate::tensor::{Shape, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("{op}: expected {expected} channels, got {actual}")]
    Channels {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: size mismatch ({expected_w}x{expected_h} vs {actual_w}x{actual_h})")]
    Size {
        op: &'static str,
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error("{op}: value {value} out of range at pixel ({x}, {y})")]
    Range {
        op: &'static str,
        value: f64,
        x: usize,
        y: usize,
    },
    #[error("{op}: {message}")]
    Contract { op: &'static str, message: String },
}

/// Linear-light float image stored row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::Contract {
                op: "ImageF::new",
                message: format!("channels must be 1 or 3, got {channels}"),
            });
        }
        if data.len() != width * height * channels {
            return Err(ImageError::Contract {
                op: "ImageF::new",
                message: format!(
                    "{width}x{height}x{channels} needs {} values, got {}",
                    width * height * channels,
                    data.len()
                ),
            });
        }
        Ok(ImageF {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        ImageF {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds an image from `f(x, y, c)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        ImageF {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_size(&self, other: &ImageF) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_size(&self, other: &ImageF, op: &'static str) -> Result<(), ImageError> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(ImageError::Size {
                op,
                expected_w: self.width,
                expected_h: self.height,
                actual_w: other.width,
                actual_h: other.height,
            })
        }
    }

    pub(crate) fn check_channels(
        &self,
        expected: usize,
        op: &'static str,
    ) -> Result<(), ImageError> {
        if self.channels == expected {
            Ok(())
        } else {
            Err(ImageError::Channels {
                op,
                expected,
                actual: self.channels,
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageF {
        ImageF {
            data: self.data.iter().map(|v| f(*v)).collect(),
            ..*self
        }
    }

    /// Channel `c` as a contiguous plane.
    pub fn channel_plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Rebuilds an image from per-channel planes.
    pub fn from_planes(
        width: usize,
        height: usize,
        planes: &[Vec<f64>],
    ) -> Result<ImageF, ImageError> {
        let channels = planes.len();
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != width * height {
                return Err(ImageError::Contract {
                    op: "ImageF::from_planes",
                    message: format!("plane {c} has {} values", plane.len()),
                });
            }
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        ImageF::new(width, height, channels, data)
    }

    /// Batch of equally sized images as an NCHW tensor.
    pub fn to_tensor(images: &[&ImageF]) -> Result<Tensor, ImageError> {
        let first = images.first().ok_or(ImageError::Contract {
            op: "ImageF::to_tensor",
            message: "empty batch".into(),
        })?;
        let (w, h, c) = (first.width, first.height, first.channels);
        let mut data = Vec::with_capacity(images.len() * w * h * c);
        for img in images {
            first.check_size(img, "ImageF::to_tensor")?;
            img.check_channels(c, "ImageF::to_tensor")?;
            for ch in 0..c {
                data.extend(img.data.iter().skip(ch).step_by(c));
            }
        }
        Ok(Tensor::new(Shape::new(images.len(), c, h, w), data).expect("tensor size"))
    }

    /// Batch item `n` of an NCHW tensor with 1 or 3 channels.
    pub fn from_tensor(t: &Tensor, n: usize) -> Result<ImageF, ImageError> {
        let s = t.shape();
        let planes: Vec<Vec<f64>> = (0..s.c).map(|c| t.plane(n, c).to_vec()).collect();
        ImageF::from_planes(s.w, s.h, &planes)
    }
}

/// An input image with its reflectance and single-channel shading.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicTriplet {
    pub input: ImageF,
    pub reflectance: ImageF,
    pub shading: ImageF,
}

impl IntrinsicTriplet {
    pub fn new(input: ImageF, reflectance: ImageF, shading: ImageF) -> Result<Self, ImageError> {
        const OP: &str = "IntrinsicTriplet";
        input.check_channels(3, OP)?;
        reflectance.check_channels(3, OP)?;
        shading.check_channels(1, OP)?;
        input.check_size(&reflectance, OP)?;
        input.check_size(&shading, OP)?;
        Ok(IntrinsicTriplet {
            input,
            reflectance,
            shading,
        })
    }

    /// Largest absolute deviation between `input` and `reflectance * shading`.
    pub fn product_error(&self) -> f64 {
        let recomposed = compose(&self.reflectance, &self.shading).expect("validated triplet");
        recomposed
            .data()
            .iter()
            .zip(self.input.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Pixel-aligned captures of one static scene under different lighting.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSceneGroup {
    pub id: String,
    pub images: Vec<ImageF>,
}

impl RealSceneGroup {
    pub fn new(id: impl Into<String>, images: Vec<ImageF>) -> Result<Self, ImageError> {
        let id = id.into();
        if images.len() < 2 {
            return Err(ImageError::Contract {
                op: "RealSceneGroup",
                message: format!(
                    "real scene {id} requires at least 2 images, got {}",
                    images.len()
                ),
            });
        }
        for img in &images {
            img.check_channels(3, "RealSceneGroup")?;
            images[0].check_size(img, "RealSceneGroup")?;
        }
        Ok(RealSceneGroup { id, images })
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }
}
