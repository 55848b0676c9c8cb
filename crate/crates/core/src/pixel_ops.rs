//! Gray-scale conversion, binarization and per-module kernels.

use std::fmt;

use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// YCbCr luma weights for R, G, B.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Per-channel weights of the gray operator for an image with `channels` channels.
pub fn channel_weights(channels: usize) -> &'static [f64] {
    match channels {
        1 => &[1.0],
        3 => &LUMA,
        _ => panic!("unsupported channel count {channels}"),
    }
}

/// Gray value of one pixel.
///
/// Evaluated as `(299 r + 587 g + 114 b) / 1000` so that neutral grays map to
/// themselves exactly; `(½, ½, ½)` must land on the binarization threshold.
#[inline]
pub fn gray(pixel: &[f64]) -> f64 {
    match *pixel {
        [v] => v,
        [r, g, b] => (299.0 * r + 587.0 * g + 114.0 * b) / 1000.0,
        _ => panic!("unsupported channel count {}", pixel.len()),
    }
}

/// Single-channel luma image; identity on gray input.
pub fn grayscale(img: &RasterImage) -> RasterImage {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img.data().chunks_exact(3).map(gray).collect();
    RasterImage::new(img.height(), img.width(), 1, data).expect("shape preserved")
}

/// Binary image: `1` where gray ≥ ½ (white), else `0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<u8>,
}

impl Bitmap {
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.bits[i * self.width + j]
    }

    pub fn to_raster(&self) -> RasterImage {
        let data = self.bits.iter().map(|&b| f64::from(b)).collect();
        RasterImage::new(self.height, self.width, 1, data).expect("shape preserved")
    }
}

/// Threshold at ½; exactly ½ counts as white.
#[inline]
pub fn binarize_value(g: f64) -> u8 {
    u8::from(g >= 0.5)
}

pub fn binarize(img: &RasterImage) -> Bitmap {
    let c = img.channels();
    let bits = img.data().chunks_exact(c).map(|p| binarize_value(gray(p))).collect();
    Bitmap {
        height: img.height(),
        width: img.width(),
        bits,
    }
}

/// Square weight matrix applied over one module.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleKernel {
    size: usize,
    weights: Vec<f64>,
    /// `(origin, side)` when the kernel is a uniform centered block.
    block: Option<(usize, usize)>,
}

impl ModuleKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.size + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// `(origin, side)` of the averaging block for kernels built by [`center_filter`].
    pub fn uniform_block(&self) -> Option<(usize, usize)> {
        self.block
    }
}

impl fmt::Display for ModuleKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.weights.chunks(self.size) {
            let line: Vec<String> = row.iter().map(|w| format!("{w:.6}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Default Gaussian spread: ±3σ spans the module.
pub fn default_sigma(module_px: usize) -> f64 {
    module_px as f64 / 6.0
}

/// Isotropic Gaussian sampled at pixel centers around `((m−1)/2, (m−1)/2)`,
/// normalized to unit sum.
pub fn gaussian_kernel(m: usize, sigma: f64) -> Result<ModuleKernel> {
    if m == 0 {
        return Err(Error::ModuleTooSmall(0, 1));
    }
    if sigma.is_nan() || sigma <= 0.0 || sigma.is_infinite() {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    let center = (m as f64 - 1.0) / 2.0;
    let denom = 2.0 * sigma * sigma;
    let mut weights: Vec<f64> = (0..m * m)
        .map(|k| {
            let di = (k / m) as f64 - center;
            let dj = (k % m) as f64 - center;
            (-(di * di + dj * dj) / denom).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(ModuleKernel {
        size: m,
        weights,
        block: None,
    })
}

/// Side of the center sub-module, `⌈m/3⌉`.
pub fn center_block(m: usize) -> usize {
    m.div_ceil(3)
}

/// Averaging filter over the centered `⌈m/3⌉ × ⌈m/3⌉` block.
///
/// The block starts at `⌊(m − b)/2⌋` on both axes; every cell inside carries
/// `1/b²`.
pub fn center_filter(m: usize) -> Result<ModuleKernel> {
    if m < 3 {
        return Err(Error::ModuleTooSmall(m, 3));
    }
    let b = center_block(m);
    let origin = (m - b) / 2;
    let inside = |x: usize| (origin..origin + b).contains(&x);
    let w = 1.0 / (b * b) as f64;
    let weights = (0..m * m)
        .map(|k| if inside(k / m) && inside(k % m) { w } else { 0.0 })
        .collect();
    Ok(ModuleKernel {
        size: m,
        weights,
        block: Some((origin, b)),
    })
}

/// Offset and side of the center block, `(⌊(m−b)/2⌋, b)`.
pub fn center_block_bounds(m: usize) -> (usize, usize) {
    let b = center_block(m);
    ((m - b) / 2, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn px(r: f64, g: f64, b: f64) -> RasterImage {
        RasterImage::new(1, 1, 3, vec![r, g, b]).unwrap()
    }

    #[test]
    fn grayscale_examples() {
        assert_eq!(grayscale(&px(1.0, 1.0, 1.0)).data()[0], 1.0);
        assert_eq!(grayscale(&px(1.0, 0.0, 0.0)).data()[0], 0.299);
        assert_eq!(grayscale(&px(0.5, 0.5, 0.5)).data()[0], 0.5);
        assert_eq!(binarize(&px(0.5, 0.5, 0.5)).bits, vec![1]);
        let g = RasterImage::new(1, 2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(grayscale(&g), g);
    }

    #[test]
    fn binarize_threshold_is_inclusive() {
        assert_eq!(binarize_value(0.5), 1);
        assert_eq!(binarize_value(0.499), 0);
        let img = RasterImage::new(1, 3, 1, vec![0.5, 0.499, 0.9]).unwrap();
        let b = binarize(&img);
        assert_eq!(b.bits, vec![1, 0, 1]);
        assert_eq!(binarize(&b.to_raster()), b);
    }

    #[test]
    fn gaussian_kernel_examples() {
        let k = gaussian_kernel(1, 0.3).unwrap();
        assert_eq!(k.weights(), &[1.0]);
        let flat = gaussian_kernel(3, 1e9).unwrap();
        for &w in flat.weights() {
            assert!((w - 1.0 / 9.0).abs() < 1e-12);
        }
        assert!(gaussian_kernel(3, 0.0).is_err());
        assert!(gaussian_kernel(3, -1.0).is_err());
        assert!(gaussian_kernel(3, f64::NAN).is_err());
    }

    #[test]
    fn center_filter_examples() {
        let f3 = center_filter(3).unwrap();
        assert_eq!(f3.weights(), &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);

        let f20 = center_filter(20).unwrap();
        assert_eq!(center_block(20), 7);
        assert_eq!(center_block_bounds(20), (6, 7));
        let nonzero: Vec<(usize, usize)> = (0..400)
            .filter(|k| f20.weights()[*k] != 0.0)
            .map(|k| (k / 20, k % 20))
            .collect();
        assert_eq!(nonzero.len(), 49);
        assert!(nonzero
            .iter()
            .all(|&(i, j)| (6..13).contains(&i) && (6..13).contains(&j)));
        assert!(f20.weights().iter().all(|&w| w == 0.0 || w == 1.0 / 49.0));
        assert!((f20.sum() - 1.0).abs() < 1e-12);

        assert!(matches!(center_filter(2), Err(Error::ModuleTooSmall(2, 3))));
    }

    #[test]
    fn kernel_display_has_one_line_per_row() {
        let k = center_filter(4).unwrap();
        assert_eq!(k.to_string().lines().count(), 4);
    }

    proptest! {
        #[test]
        fn gaussian_kernel_sums_to_one_and_is_symmetric(m in 1usize..40, sigma in 0.05f64..50.0) {
            let k = gaussian_kernel(m, sigma).unwrap();
            prop_assert!((k.sum() - 1.0).abs() < 1e-12);
            for i in 0..m {
                for j in 0..m {
                    let w = k.weight(i, j);
                    prop_assert!(w >= 0.0);
                    prop_assert!((w - k.weight(m - 1 - i, j)).abs() < 1e-15);
                    prop_assert!((w - k.weight(i, m - 1 - j)).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn center_filter_sums_to_one(m in 3usize..64) {
            prop_assert!((center_filter(m).unwrap().sum() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn grayscale_is_linear(
            a in proptest::array::uniform3(0.0f64..=1.0),
            b in proptest::array::uniform3(0.0f64..=1.0),
            alpha in 0.0f64..=1.0,
        ) {
            let (ia, ib) = (px(a[0], a[1], a[2]), px(b[0], b[1], b[2]));
            let mix = grayscale(&ia.lerp(&ib, alpha).unwrap()).data()[0];
            let sep = alpha * grayscale(&ia).data()[0] + (1.0 - alpha) * grayscale(&ib).data()[0];
            prop_assert!((mix - sep).abs() < 1e-12);
        }
    }
}
