//! Simulated scanning at exact module positions.
//!
//! Each module is read by averaging the gray value over its center
//! sub-module and thresholding at ½, the same rule the loss uses for `φ`.
//! There is no geometric distortion and no Reed–Solomon decoding.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::pixel_ops::center_filter;
use crate::qr::QrSpec;
use crate::raster::RasterImage;
use crate::srl::module_mean;
use crate::target::{Geometry, TargetBitmap};

/// Opacity of the red tint over mismatched modules.
pub const OVERLAY_ALPHA: f64 = 0.5;

/// Sampled module bits, row-major, `1` = white.
pub fn sample_modules(img: &RasterImage, spec: &QrSpec) -> Result<Vec<u8>> {
    spec.validate()?;
    sample_geometry(img, &spec.geometry())
}

/// As [`sample_modules`] but for arbitrary module geometry.
pub fn sample_geometry(img: &RasterImage, geometry: &Geometry) -> Result<Vec<u8>> {
    geometry.check_image(img)?;
    let filter = center_filter(geometry.module_px)?;
    Ok(par::map_range(geometry.num_modules(), |k| {
        module_mean(img, &geometry.region(k), &filter)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// Modules per side.
    pub size: usize,
    /// Sampled bits, row-major, `1` = white.
    pub sampled_bits: Vec<u8>,
    pub mismatch: Vec<bool>,
    pub mismatch_rate: f64,
    pub mismatched_modules: usize,
    pub function_mismatches: usize,
    pub tau: f64,
    /// No module mismatches.
    pub scannable_strict: bool,
    /// Mismatch rate at most `tau` and no function-pattern mismatches.
    pub scannable_tolerant: bool,
}

impl ErrorReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Sampled modules in the module-matrix convention (`true` = dark).
    pub fn sampled_dark(&self) -> Vec<bool> {
        self.sampled_bits.iter().map(|&b| b == 0).collect()
    }

    pub fn is_mismatched(&self, row: usize, col: usize) -> bool {
        self.mismatch[row * self.size + col]
    }
}

pub fn mismatch_report(img: &RasterImage, target: &TargetBitmap, spec: &QrSpec, tau: f64) -> Result<ErrorReport> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [0, 1], got {tau}")));
    }
    spec.validate()?;
    if spec.geometry() != target.geometry() {
        return Err(Error::DimensionMismatch(
            "target geometry does not match the QR spec".into(),
        ));
    }
    let sampled = sample_modules(img, spec)?;
    let mismatch: Vec<bool> = sampled
        .iter()
        .zip(target.module_targets())
        .map(|(s, t)| s != t)
        .collect();
    let mismatched = mismatch.iter().filter(|&&m| m).count();
    let function_mismatches = mismatch
        .iter()
        .enumerate()
        .filter(|&(k, &m)| m && target.is_function(k))
        .count();
    let rate = mismatched as f64 / mismatch.len() as f64;
    Ok(ErrorReport {
        size: spec.modules(),
        sampled_bits: sampled,
        mismatch,
        mismatch_rate: rate,
        mismatched_modules: mismatched,
        function_mismatches,
        tau,
        scannable_strict: mismatched == 0,
        scannable_tolerant: function_mismatches == 0 && rate <= tau,
    })
}

/// RGB copy of `img` with each mismatched module tinted red.
pub fn overlay(img: &RasterImage, report: &ErrorReport, spec: &QrSpec) -> Result<RasterImage> {
    let geometry = spec.geometry();
    geometry.check_image(img)?;
    if report.size != geometry.modules {
        return Err(Error::DimensionMismatch(format!(
            "report covers {} modules per side, spec has {}",
            report.size, geometry.modules
        )));
    }
    let mut out = img.to_rgb();
    const RED: [f64; 3] = [1.0, 0.0, 0.0];
    for (k, _) in report.mismatch.iter().enumerate().filter(|(_, &m)| m) {
        let region = geometry.region(k);
        for (i, j) in region.pixels() {
            for (v, r) in out.pixel_mut(i, j).iter_mut().zip(RED) {
                *v = (1.0 - OVERLAY_ALPHA) * *v + OVERLAY_ALPHA * r;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qr::{ec_capacity, encode, EcLevel};
    use crate::srl::error_rate;
    use crate::target::render;

    fn setup() -> (QrSpec, crate::qr::ModuleMatrix, RasterImage, TargetBitmap) {
        let spec = QrSpec {
            module_px: 6,
            padding_px: 6,
            ..QrSpec::default()
        };
        let m = encode(b"Thanks reviewer!", &spec).unwrap();
        let (r, t) = render(&m, &spec).unwrap();
        (spec, m, r.to_rgb(), t)
    }

    fn flip_center(img: &mut RasterImage, spec: &QrSpec, k: usize) {
        let region = spec.geometry().region(k);
        let (o, b) = crate::pixel_ops::center_block_bounds(spec.module_px);
        for i in region.top + o..region.top + o + b {
            for j in region.left + o..region.left + o + b {
                for v in img.pixel_mut(i, j) {
                    *v = 1.0 - *v;
                }
            }
        }
    }

    #[test]
    fn plain_rendering_samples_back_to_matrix() {
        let (spec, m, raster, target) = setup();
        let sampled = sample_modules(&raster, &spec).unwrap();
        let dark: Vec<bool> = sampled.iter().map(|&b| b == 0).collect();
        assert_eq!(dark, m.bits());
        let r = mismatch_report(&raster, &target, &spec, 0.3).unwrap();
        assert_eq!(r.mismatch_rate, 0.0);
        assert!(r.scannable_strict && r.scannable_tolerant);
        assert_eq!(r.sampled_dark(), m.bits());
    }

    #[test]
    fn inverted_rendering_fails_both_tiers() {
        let (spec, _, raster, target) = setup();
        let r = mismatch_report(&raster.inverted(), &target, &spec, 0.3).unwrap();
        assert_eq!(r.mismatch_rate, 1.0);
        assert!(!r.scannable_strict && !r.scannable_tolerant);
    }

    #[test]
    fn center_flip_is_local() {
        let (spec, _, mut raster, target) = setup();
        flip_center(&mut raster, &spec, 100);
        let r = mismatch_report(&raster, &target, &spec, 0.3).unwrap();
        assert_eq!(r.mismatched_modules, 1);
        assert!(r.mismatch[100]);
    }

    #[test]
    fn off_center_recoloring_is_invisible() {
        let (spec, m, mut raster, _) = setup();
        let (o, b) = crate::pixel_ops::center_block_bounds(spec.module_px);
        let geometry = spec.geometry();
        for k in 0..geometry.num_modules() {
            let region = geometry.region(k);
            for (i, j) in region.pixels() {
                let (a, c) = (i - region.top, j - region.left);
                let inside = (o..o + b).contains(&a) && (o..o + b).contains(&c);
                if !inside {
                    raster.pixel_mut(i, j).copy_from_slice(&[0.9, 0.1, 0.4]);
                }
            }
        }
        let dark: Vec<bool> = sample_modules(&raster, &spec)
            .unwrap()
            .iter()
            .map(|&b| b == 0)
            .collect();
        assert_eq!(dark, m.bits());
    }

    #[test]
    fn tolerant_tier_accepts_few_data_errors() {
        let (spec, m, mut raster, target) = setup();
        let tau = ec_capacity(EcLevel::H);
        let data: Vec<usize> = (0..m.size() * m.size())
            .filter(|&k| !target.is_function(k))
            .step_by(37)
            .take(5)
            .collect();
        for &k in &data {
            flip_center(&mut raster, &spec, k);
        }
        let r = mismatch_report(&raster, &target, &spec, tau).unwrap();
        assert!((r.mismatch_rate - 5.0 / 841.0).abs() < 1e-15);
        assert!(r.scannable_tolerant);
        assert!(!r.scannable_strict);
        assert_eq!(r.mismatch_rate, error_rate(&raster, &target).unwrap());

        // One finder module wrong breaks tolerance.
        flip_center(&mut raster, &spec, 0);
        let r = mismatch_report(&raster, &target, &spec, tau).unwrap();
        assert_eq!(r.function_mismatches, 1);
        assert!(!r.scannable_tolerant);
    }

    #[test]
    fn overlay_tints_only_mismatches() {
        let (spec, _, raster, target) = setup();
        let clean = mismatch_report(&raster, &target, &spec, 0.3).unwrap();
        assert_eq!(overlay(&raster, &clean, &spec).unwrap(), raster);

        let mut one = raster.clone();
        flip_center(&mut one, &spec, 200);
        let r = mismatch_report(&one, &target, &spec, 0.3).unwrap();
        let ov = overlay(&one, &r, &spec).unwrap();
        let region = spec.geometry().region(200);
        for i in 0..one.height() {
            for j in 0..one.width() {
                let changed = ov.pixel(i, j) != one.pixel(i, j);
                if region.contains(i, j) {
                    let p = one.pixel(i, j);
                    let expect = [0.5 * p[0] + 0.5, 0.5 * p[1], 0.5 * p[2]];
                    assert_eq!(ov.pixel(i, j), &expect);
                } else {
                    assert!(!changed);
                }
            }
        }

        let all = mismatch_report(&raster.inverted(), &target, &spec, 0.3).unwrap();
        let ov = overlay(&raster.inverted(), &all, &spec).unwrap();
        for k in 0..spec.geometry().num_modules() {
            let reg = spec.geometry().region(k);
            assert_ne!(ov.pixel(reg.top, reg.left), raster.inverted().pixel(reg.top, reg.left));
        }
    }

    #[test]
    fn geometry_mismatch() {
        let (spec, _, _, target) = setup();
        let img = RasterImage::filled(10, 10, 3, 1.0);
        assert!(sample_modules(&img, &spec).is_err());
        assert!(mismatch_report(&img, &target, &spec, 0.3).is_err());
        let other = QrSpec { module_px: 7, ..spec };
        let raster = target.to_raster();
        assert!(mismatch_report(&raster, &target, &other, 0.3).is_err());
    }
}
