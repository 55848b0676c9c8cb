//! Scanning-robust loss over module geometry.
//!
//! Per pixel the error is `max(1 − 2G(x), 0)·y + max(2G(x) − 1, 0)·(1 − y)`,
//! module errors re-weight it by a normalized Gaussian, and the gated loss only
//! keeps modules whose simulated scan (`φ`) disagrees with the target. The
//! relaxed variant drops the gate and is convex in `x`.
//!
//! The gate is treated as a constant when differentiating: `φ` contributes no
//! gradient term, and a gated-off module contributes nothing at all.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::pixel_ops::{self, binarize_value, gray, ModuleKernel};
use crate::raster::RasterImage;
use crate::target::{ModuleRegion, TargetBitmap};

/// Pixel error matrix `E`, zero on padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ErrorMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.width + j]
    }
}

/// Loss summary for one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrlReport {
    pub loss: f64,
    pub error_rate: f64,
    pub num_modules: usize,
    /// Gaussian-weighted error per module.
    pub module_errors: Vec<f64>,
    /// `φ` per module: `1` when the module still needs updating.
    pub active: Vec<u8>,
}

impl SrlReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Single-pixel error for gray value `g` and target `y`.
#[inline]
pub fn pixel_error(g: f64, y: u8) -> f64 {
    if y == 1 {
        (1.0 - 2.0 * g).max(0.0)
    } else {
        (2.0 * g - 1.0).max(0.0)
    }
}

/// Sub-gradient of [`pixel_error`] with respect to `g`; zero at the kink.
#[inline]
pub fn pixel_error_slope(g: f64, y: u8) -> f64 {
    if y == 1 && g < 0.5 {
        -2.0
    } else if y == 0 && g > 0.5 {
        2.0
    } else {
        0.0
    }
}

/// `φ`: `0` when the sampled bit already equals the target bit.
#[inline]
pub fn phi(sampled: u8, target_center: u8) -> u8 {
    u8::from(sampled != target_center)
}

/// Gaussian-weighted error of one module, `Σ G_σ(i,j)·E(i,j)` over `M_k`.
pub fn module_error(errors: &ErrorMatrix, kernel: &ModuleKernel, region: &ModuleRegion) -> Result<f64> {
    if kernel.size() != region.size {
        return Err(Error::DimensionMismatch(format!(
            "kernel side {} vs module side {}",
            kernel.size(),
            region.size
        )));
    }
    if region.top + region.size > errors.height || region.left + region.size > errors.width {
        return Err(Error::DimensionMismatch("module region outside error matrix".into()));
    }
    let mut acc = 0.0;
    for a in 0..region.size {
        for b in 0..region.size {
            acc += kernel.weight(a, b) * errors.get(region.top + a, region.left + b);
        }
    }
    Ok(acc)
}

/// Simulated scanner read of one module: `1` (white) iff the filtered gray
/// value reaches ½.
pub fn module_mean(x: &RasterImage, region: &ModuleRegion, filter: &ModuleKernel) -> u8 {
    if let Some((origin, b)) = filter.uniform_block() {
        // Plain block mean; dividing once keeps exact ½ exact.
        let mut sum = 0.0;
        for i in region.top + origin..region.top + origin + b {
            for j in region.left + origin..region.left + origin + b {
                sum += gray(x.pixel(i, j));
            }
        }
        return binarize_value(sum / (b * b) as f64);
    }
    let mut acc = 0.0;
    for a in 0..region.size {
        for b in 0..region.size {
            let w = filter.weight(a, b);
            if w != 0.0 {
                acc += w * gray(x.pixel(region.top + a, region.left + b));
            }
        }
    }
    binarize_value(acc)
}

/// Loss evaluator bound to one target and kernel width.
#[derive(Debug, Clone)]
pub struct Srl<'a> {
    target: &'a TargetBitmap,
    kernel: ModuleKernel,
    filter: ModuleKernel,
}

/// Per-module results of one pass over the image.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleScan {
    pub module_errors: Vec<f64>,
    /// `φ` per module.
    pub active: Vec<u8>,
}

impl ModuleScan {
    pub fn num_modules(&self) -> usize {
        self.active.len()
    }

    /// Relaxed loss `(1/N) Σ Ẽ_k`.
    pub fn relaxed_loss(&self) -> f64 {
        self.module_errors.iter().sum::<f64>() / self.num_modules() as f64
    }

    /// Gated loss `(1/N) Σ φ_k Ẽ_k`.
    pub fn gated_loss(&self) -> f64 {
        let s: f64 = self
            .module_errors
            .iter()
            .zip(&self.active)
            .filter(|(_, &a)| a == 1)
            .map(|(e, _)| e)
            .sum();
        s / self.num_modules() as f64
    }

    /// `ℰ = (1/N) Σ φ_k`.
    pub fn error_rate(&self) -> f64 {
        self.active.iter().map(|&a| usize::from(a)).sum::<usize>() as f64 / self.num_modules() as f64
    }

    pub fn into_report(self) -> SrlReport {
        SrlReport {
            loss: self.gated_loss(),
            error_rate: self.error_rate(),
            num_modules: self.num_modules(),
            module_errors: self.module_errors,
            active: self.active,
        }
    }
}

impl<'a> Srl<'a> {
    pub fn new(target: &'a TargetBitmap, sigma: f64) -> Result<Self> {
        let m = target.geometry().module_px;
        Ok(Self {
            target,
            kernel: pixel_ops::gaussian_kernel(m, sigma)?,
            filter: pixel_ops::center_filter(m)?,
        })
    }

    /// Evaluator with `σ = m/6`.
    pub fn with_default_sigma(target: &'a TargetBitmap) -> Result<Self> {
        Self::new(target, pixel_ops::default_sigma(target.geometry().module_px))
    }

    pub fn target(&self) -> &TargetBitmap {
        self.target
    }

    pub fn kernel(&self) -> &ModuleKernel {
        &self.kernel
    }

    pub fn filter(&self) -> &ModuleKernel {
        &self.filter
    }

    pub fn num_modules(&self) -> usize {
        self.target.num_modules()
    }

    fn check(&self, x: &RasterImage) -> Result<()> {
        self.target.check_image(x)
    }

    pub fn error_matrix(&self, x: &RasterImage) -> Result<ErrorMatrix> {
        error_matrix(x, self.target)
    }

    fn module_error_at(&self, x: &RasterImage, region: &ModuleRegion, y: u8) -> f64 {
        let mut acc = 0.0;
        for a in 0..region.size {
            for b in 0..region.size {
                let g = gray(x.pixel(region.top + a, region.left + b));
                acc += self.kernel.weight(a, b) * pixel_error(g, y);
            }
        }
        acc
    }

    /// `φ` for every module.
    pub fn decisions(&self, x: &RasterImage) -> Result<Vec<u8>> {
        self.check(x)?;
        let regions = self.target.regions();
        Ok(par::map_range(regions.len(), |k| {
            phi(module_mean(x, &regions[k], &self.filter), self.target.module_target(k))
        }))
    }

    /// Module errors and decisions in one pass.
    pub fn scan(&self, x: &RasterImage) -> Result<ModuleScan> {
        self.check(x)?;
        let regions = self.target.regions();
        let per_module = par::map_range(regions.len(), |k| {
            let y = self.target.module_target(k);
            let err = self.module_error_at(x, &regions[k], y);
            let active = phi(module_mean(x, &regions[k], &self.filter), y);
            (err, active)
        });
        let (module_errors, active) = per_module.into_iter().unzip();
        Ok(ModuleScan { module_errors, active })
    }

    pub fn report(&self, x: &RasterImage) -> Result<SrlReport> {
        Ok(self.scan(x)?.into_report())
    }

    pub fn relaxed(&self, x: &RasterImage) -> Result<f64> {
        self.check(x)?;
        let regions = self.target.regions();
        let errs = par::map_range(regions.len(), |k| {
            self.module_error_at(x, &regions[k], self.target.module_target(k))
        });
        Ok(errs.iter().sum::<f64>() / regions.len() as f64)
    }

    pub fn error_rate(&self, x: &RasterImage) -> Result<f64> {
        let d = self.decisions(x)?;
        Ok(d.iter().map(|&a| usize::from(a)).sum::<usize>() as f64 / d.len() as f64)
    }

    /// Gradient of the relaxed loss (`relaxed = true`) or of the gated loss
    /// with `φ` held fixed at its value on `x`.
    pub fn gradient(&self, x: &RasterImage, relaxed: bool) -> Result<RasterImage> {
        let active = if relaxed { None } else { Some(self.decisions(x)?) };
        self.check(x)?;
        let geometry = self.target.geometry();
        let m = geometry.module_px;
        let pad = geometry.padding_px;
        let n = self.num_modules() as f64;
        let coef = pixel_ops::channel_weights(x.channels());
        let channels = x.channels();
        let row_len = x.row_len();
        let width = x.width();
        let mut grad = RasterImage::filled(x.height(), width, channels, 0.0);
        let src = x.data();

        par::for_each_chunk(grad.data_mut(), row_len, |i, out| {
            if i < pad {
                return;
            }
            let a = (i - pad) % m;
            for j in pad..width.saturating_sub(pad) {
                let Some(k) = self.target.module_index(i, j) else {
                    continue;
                };
                if let Some(active) = &active {
                    if active[k] == 0 {
                        continue;
                    }
                }
                let o = i * row_len + j * channels;
                let g = gray(&src[o..o + channels]);
                let slope = pixel_error_slope(g, self.target.y(i, j));
                if slope == 0.0 {
                    continue;
                }
                let d = slope * self.kernel.weight(a, (j - pad) % m) / n;
                for (c, w) in coef.iter().enumerate() {
                    out[j * channels + c] = d * w;
                }
            }
        });
        Ok(grad)
    }
}

/// Pixel error matrix for `x` against `target`.
pub fn error_matrix(x: &RasterImage, target: &TargetBitmap) -> Result<ErrorMatrix> {
    target.check_image(x)?;
    let (h, w) = (x.height(), x.width());
    let mut values = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            if target.module_index(i, j).is_some() {
                values[i * w + j] = pixel_error(gray(x.pixel(i, j)), target.y(i, j));
            }
        }
    }
    Ok(ErrorMatrix {
        height: h,
        width: w,
        values,
    })
}

/// Full gated loss report.
pub fn srl(x: &RasterImage, target: &TargetBitmap, sigma: f64) -> Result<SrlReport> {
    Srl::new(target, sigma)?.report(x)
}

/// Loss without the early-stopping gate.
pub fn srl_relaxed(x: &RasterImage, target: &TargetBitmap, sigma: f64) -> Result<f64> {
    Srl::new(target, sigma)?.relaxed(x)
}

/// Fraction of modules whose simulated scan disagrees with the target.
pub fn error_rate(x: &RasterImage, target: &TargetBitmap) -> Result<f64> {
    let m = target.geometry().module_px;
    let filter = pixel_ops::center_filter(m)?;
    target.check_image(x)?;
    let regions = target.regions();
    let mismatched = par::map_range(regions.len(), |k| {
        phi(module_mean(x, &regions[k], &filter), target.module_target(k))
    });
    Ok(mismatched.iter().map(|&a| usize::from(a)).sum::<usize>() as f64 / regions.len() as f64)
}

pub fn srl_gradient(x: &RasterImage, target: &TargetBitmap, sigma: f64, relaxed: bool) -> Result<RasterImage> {
    Srl::new(target, sigma)?.gradient(x, relaxed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qr::{encode, ModuleMatrix, QrSpec};
    use crate::target::render;

    fn small() -> (RasterImage, TargetBitmap) {
        let spec = QrSpec {
            module_px: 6,
            padding_px: 4,
            ..QrSpec::default()
        };
        let m = encode(b"Thanks reviewer!", &spec).unwrap();
        render(&m, &spec).unwrap()
    }

    fn one_module(dark: bool, m: usize) -> TargetBitmap {
        let matrix = ModuleMatrix::from_parts(1, vec![dark], vec![false]).unwrap();
        TargetBitmap::from_matrix(&matrix, m, 0).unwrap()
    }

    #[test]
    fn pixel_error_examples() {
        assert!((pixel_error(0.2, 1) - 0.6).abs() < 1e-15);
        assert!((pixel_error(0.8, 0) - 0.6).abs() < 1e-15);
        assert_eq!(pixel_error(0.5, 0), 0.0);
        assert_eq!(pixel_error(0.5, 1), 0.0);
    }

    #[test]
    fn rendered_target_has_zero_error_everywhere() {
        let (raster, target) = small();
        let e = error_matrix(&raster, &target).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
        let r = srl(&raster, &target, 1.0).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.error_rate, 0.0);
        assert!(r.active.iter().all(|&a| a == 0));
        assert_eq!(srl_relaxed(&raster, &target, 1.0).unwrap(), 0.0);
        let g = srl_gradient(&raster.to_rgb(), &target, 1.0, true).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padding_is_excluded() {
        let (raster, target) = small();
        let mut x = raster.clone();
        // Blacken the quiet zone.
        for i in 0..4 {
            for j in 0..x.width() {
                x.pixel_mut(i, j)[0] = 0.0;
            }
        }
        assert_eq!(srl_relaxed(&x, &target, 1.0).unwrap(), 0.0);
        assert_eq!(error_rate(&x, &target).unwrap(), 0.0);
    }

    #[test]
    fn module_error_examples() {
        let target = one_module(false, 20);
        let k = pixel_ops::gaussian_kernel(20, 20.0 / 6.0).unwrap();
        let region = target.regions()[0];
        let c = ErrorMatrix {
            height: 20,
            width: 20,
            values: vec![0.37; 400],
        };
        assert!((module_error(&c, &k, &region).unwrap() - 0.37).abs() < 1e-12);
        let z = ErrorMatrix {
            values: vec![0.0; 400],
            ..c.clone()
        };
        assert_eq!(module_error(&z, &k, &region).unwrap(), 0.0);
        let small_kernel = pixel_ops::gaussian_kernel(3, 1.0).unwrap();
        assert!(module_error(&c, &small_kernel, &region).is_err());
    }

    #[test]
    fn single_center_error_picks_center_weight() {
        // Oracle: unnormalized Gaussian at offsets (±0.5, ±0.5) over the full sum.
        let m = 20usize;
        let sigma = m as f64 / 6.0;
        let total: f64 = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| {
                let (di, dj) = (i as f64 - 9.5, j as f64 - 9.5);
                (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()
            })
            .sum();
        let expected = (-(0.5f64) / (2.0 * sigma * sigma)).exp() / total;

        let target = one_module(false, m);
        let mut values = vec![0.0; m * m];
        values[9 * m + 9] = 1.0;
        let e = ErrorMatrix {
            height: m,
            width: m,
            values,
        };
        let k = pixel_ops::gaussian_kernel(m, sigma).unwrap();
        let got = module_error(&e, &k, &target.regions()[0]).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
        assert!((expected - 0.014_078).abs() < 1e-5);
    }

    #[test]
    fn module_mean_examples() {
        let target = one_module(true, 20);
        let region = target.regions()[0];
        let filter = pixel_ops::center_filter(20).unwrap();
        assert_eq!(module_mean(&RasterImage::filled(20, 20, 3, 1.0), &region, &filter), 1);
        assert_eq!(module_mean(&RasterImage::filled(20, 20, 3, 0.0), &region, &filter), 0);
        let half_center = RasterImage::from_fn(20, 20, 3, |i, j, p| {
            let v = if (6..13).contains(&i) && (6..13).contains(&j) {
                0.5
            } else {
                0.0
            };
            p.fill(v);
        });
        assert_eq!(module_mean(&half_center, &region, &filter), 1);
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(1, 1), 0);
        assert_eq!(phi(1, 0), 1);
        assert_eq!(phi(0, 0), 0);
    }

    #[test]
    fn inverted_target_activates_every_module() {
        let (raster, target) = small();
        let inv = raster.inverted();
        let r = srl(&inv, &target, 1.3).unwrap();
        assert_eq!(r.error_rate, 1.0);
        assert!(r.active.iter().all(|&a| a == 1));
        // Every pixel at distance 1 from the threshold side: E = 1 everywhere.
        assert!((r.loss - 1.0).abs() < 1e-12);
        let relaxed = srl_relaxed(&inv, &target, 1.3).unwrap();
        assert!((relaxed - r.loss).abs() < 1e-15);
    }

    #[test]
    fn gradient_red_channel_example() {
        // Dark target (y = 0) with G = 0.8: ∂L/∂r = +2·0.299·w/N.
        let target = one_module(true, 3);
        let k = pixel_ops::gaussian_kernel(3, 0.5).unwrap();
        let x = RasterImage::filled(3, 3, 3, 0.8);
        let g = srl_gradient(&x, &target, 0.5, true).unwrap();
        let expected = 2.0 * 0.299 * k.weight(0, 0);
        assert!((g.pixel(0, 0)[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn gradient_for_white_target_below_threshold() {
        // y = 1, G = 0.2 on red-only pixels: ∂L/∂r = −2·0.299·w/N.
        let matrix = ModuleMatrix::from_parts(2, vec![false; 4], vec![false; 4]).unwrap();
        let target = TargetBitmap::from_matrix(&matrix, 3, 1).unwrap();
        let x = RasterImage::from_fn(8, 8, 3, |_, _, p| {
            p.copy_from_slice(&[0.2 / 0.299, 0.0, 0.0]);
        });
        let g = srl_gradient(&x, &target, 0.7, true).unwrap();
        let k = pixel_ops::gaussian_kernel(3, 0.7).unwrap();
        let expected = -2.0 * 0.299 * k.weight(1, 1) / 4.0;
        assert!((g.pixel(2, 2)[0] - expected).abs() < 1e-15);
        assert!((g.pixel(2, 2)[1] + 2.0 * 0.587 * k.weight(1, 1) / 4.0).abs() < 1e-15);
        // Padding gets nothing.
        assert_eq!(g.pixel(0, 0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn gated_gradient_drops_settled_modules() {
        let (raster, target) = small();
        let mut x = raster.to_rgb();
        // Corrupt one module's periphery only: φ stays 0, relaxed gradient is nonzero.
        let region = target.regions()[0];
        for (i, j) in region.pixels().take(3) {
            let v = 1.0 - x.pixel(i, j)[0];
            x.pixel_mut(i, j).fill(v);
        }
        let s = Srl::new(&target, 1.0).unwrap();
        assert_eq!(s.decisions(&x).unwrap()[0], 0);
        assert!(s.gradient(&x, true).unwrap().l2_norm() > 0.0);
        assert_eq!(s.gradient(&x, false).unwrap().l2_norm(), 0.0);
        assert_eq!(s.report(&x).unwrap().loss, 0.0);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let (_, target) = small();
        let x = RasterImage::filled(10, 10, 1, 0.0);
        assert!(matches!(srl(&x, &target, 1.0), Err(Error::DimensionMismatch(_))));
        assert!(srl_relaxed(&x, &target, 1.0).is_err());
        assert!(error_rate(&x, &target).is_err());
        assert!(srl_gradient(&x, &target, 1.0, true).is_err());
        assert!(error_matrix(&x, &target).is_err());
    }

    #[test]
    fn report_json_fields() {
        let (raster, target) = small();
        let json: serde_json::Value = serde_json::from_str(&srl(&raster, &target, 1.0).unwrap().to_json()).unwrap();
        for key in ["loss", "error_rate", "num_modules", "module_errors", "active"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["num_modules"], 841);
    }
}
