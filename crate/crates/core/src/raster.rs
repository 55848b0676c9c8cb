//! Floating-point raster images, interleaved `height × width × channels`.

use crate::error::{Error, Result};

/// An image with one (gray) or three (RGB) channels.
///
/// Values produced by this crate lie in `[0, 1]`; intermediate images inside
/// the optimizer may step outside that box before projection, so the type
/// itself does not enforce it. See [`RasterImage::is_normalized`].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Image with every component set to `value`.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds an image from a per-pixel closure returning all channels.
    pub fn from_fn<F>(height: usize, width: usize, channels: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, &mut [f64]),
    {
        let mut img = Self::filled(height, width, channels, 0.0);
        for i in 0..height {
            for j in 0..width {
                let o = (i * width + j) * channels;
                f(i, j, &mut img.data[o..o + channels]);
            }
        }
        img
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Number of values in one row (`width × channels`).
    pub fn row_len(&self) -> usize {
        self.width * self.channels
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let o = (i * self.width + j) * self.channels;
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = (i * self.width + j) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// True when every component lies in `[0, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Replicates a gray image into three channels; RGB input is cloned.
    pub fn to_rgb(&self) -> RasterImage {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        RasterImage {
            height: self.height,
            width: self.width,
            channels: 3,
            data,
        }
    }

    /// Photographic negative, `1 − v` per component.
    pub fn inverted(&self) -> RasterImage {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = 1.0 - *v);
        out
    }

    /// Convex combination `alpha·self + (1 − alpha)·other`.
    pub fn lerp(&self, other: &RasterImage, alpha: f64) -> Result<RasterImage> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch(
                "convex combination of images with different shapes".into(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        Ok(RasterImage {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        })
    }

    /// Euclidean norm over all components.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Quantizes to 8 bits per component (round half away from zero after clamping).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(height, width, channels, data)
    }

    /// Binary portable graymap (P5) of the luma channel, for debugging.
    pub fn to_pgm(&self) -> Vec<u8> {
        let gray = crate::pixel_ops::grayscale(self);
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(gray.to_u8());
        out
    }
}
