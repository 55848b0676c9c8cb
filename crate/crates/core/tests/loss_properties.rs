use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srqr_core::{
    encode, error_rate, render, srl, srl_gradient, srl_relaxed, ModuleMatrix, QrSpec, RasterImage, TargetBitmap,
};

fn small() -> (RasterImage, TargetBitmap) {
    let spec = QrSpec {
        version: 1,
        ec_level: srqr_core::EcLevel::L,
        module_px: 3,
        padding_px: 2,
        ..QrSpec::default()
    };
    render(&encode(b"srl", &spec).unwrap(), &spec).unwrap()
}

/// Random image: noise, or the rendered code blended with noise.
fn sample(raster: &RasterImage, seed: u64, mix: f64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = RasterImage::from_fn(raster.height(), raster.width(), 3, |_, _, p| {
        p.iter_mut().for_each(|v| *v = rng.gen())
    });
    raster.to_rgb().lerp(&noise, mix).unwrap()
}

fn gauss_weights(m: usize, sigma: f64) -> Vec<f64> {
    let c = (m as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..m * m)
        .map(|k| {
            let (i, j) = ((k / m) as f64, (k % m) as f64);
            (-((i - c).powi(2) + (j - c).powi(2)) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

fn brute_relaxed(x: &RasterImage, target: &TargetBitmap, sigma: f64) -> f64 {
    let m = target.geometry().module_px;
    let w = gauss_weights(m, sigma);
    let mut total = 0.0;
    for region in target.regions() {
        let mut module = 0.0;
        for (k, (i, j)) in region.pixels().enumerate() {
            let p = x.pixel(i, j);
            let g = if p.len() == 1 {
                p[0]
            } else {
                0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
            };
            let y = f64::from(target.y(i, j));
            let e = (1.0 - 2.0 * g).max(0.0) * y + (2.0 * g - 1.0).max(0.0) * (1.0 - y);
            module += w[k] * e;
        }
        total += module;
    }
    total / target.num_modules() as f64
}

#[test]
fn single_module_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for dark in [true, false] {
        let matrix = ModuleMatrix::from_parts(1, vec![dark], vec![false]).unwrap();
        let target = TargetBitmap::from_matrix(&matrix, 3, 0).unwrap();
        for _ in 0..50 {
            let channels = if rng.gen() { 1 } else { 3 };
            let x = RasterImage::from_fn(3, 3, channels, |_, _, p| p.iter_mut().for_each(|v| *v = rng.gen()));
            let sigma = rng.gen_range(0.3..3.0);
            let got = srl_relaxed(&x, &target, sigma).unwrap();
            assert!((got - brute_relaxed(&x, &target, sigma)).abs() < 1e-12);
        }
    }
}

#[test]
fn inverted_code_matches_brute_force() {
    let (raster, target) = small();
    let inv = raster.inverted();
    let report = srl(&inv, &target, 0.5).unwrap();
    assert_eq!(report.error_rate, 1.0);
    assert!((report.loss - brute_relaxed(&inv, &target, 0.5)).abs() < 1e-12);
    assert_eq!(report.loss, srl_relaxed(&inv, &target, 0.5).unwrap());
}

#[test]
fn gradient_closed_form() {
    let (raster, target) = small();
    let x = sample(&raster, 3, 0.7);
    let sigma = 0.5;
    let grad = srl_gradient(&x, &target, sigma, true).unwrap();
    let w = gauss_weights(3, sigma);
    let n = target.num_modules() as f64;
    let luma = [0.299, 0.587, 0.114];
    for i in 0..x.height() {
        for j in 0..x.width() {
            let g = srqr_core::pixel_ops::gray(x.pixel(i, j));
            let expected_slope = match (target.module_index(i, j), target.y(i, j)) {
                (None, _) => 0.0,
                (Some(_), 1) if g < 0.5 => -2.0,
                (Some(_), 0) if g > 0.5 => 2.0,
                _ => 0.0,
            };
            let weight = target.module_index(i, j).map_or(0.0, |k| {
                let r = target.regions()[k];
                w[(i - r.top) * 3 + (j - r.left)]
            });
            for (ch, c) in luma.iter().enumerate() {
                let want = expected_slope * c * weight / n;
                let got = grad.pixel(i, j)[ch];
                assert!((got - want).abs() <= 1e-15, "({i},{j},{ch}) {got} vs {want}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn srl_bounds_and_zero_iff_no_errors(seed in any::<u64>(), mix in 0.0f64..1.0, sigma in 0.2f64..2.0) {
        let (raster, target) = small();
        let x = sample(&raster, seed, mix);
        let report = srl(&x, &target, sigma).unwrap();
        let relaxed = srl_relaxed(&x, &target, sigma).unwrap();
        prop_assert!(0.0 <= report.loss);
        prop_assert!(report.loss <= relaxed + 1e-15);
        prop_assert!(relaxed <= 1.0);
        prop_assert_eq!(report.loss == 0.0, report.error_rate == 0.0);
        prop_assert_eq!(report.error_rate, error_rate(&x, &target).unwrap());

        let n = report.num_modules as f64;
        let gated: f64 = report.module_errors.iter().zip(&report.active).map(|(e, &a)| f64::from(a) * e).sum::<f64>() / n;
        prop_assert!((gated - report.loss).abs() < 1e-12);
        let active = report.active.iter().map(|&a| f64::from(a)).sum::<f64>() / n;
        prop_assert_eq!(active, report.error_rate);
    }

    #[test]
    fn gated_gradient_vanishes_on_matched_modules(seed in any::<u64>(), mix in 0.0f64..1.0) {
        let (raster, target) = small();
        let x = sample(&raster, seed, mix);
        let sigma = 0.5;
        let report = srl(&x, &target, sigma).unwrap();
        let gated = srl_gradient(&x, &target, sigma, false).unwrap();
        let relaxed = srl_gradient(&x, &target, sigma, true).unwrap();
        for i in 0..x.height() {
            for j in 0..x.width() {
                let Some(k) = target.module_index(i, j) else {
                    prop_assert!(relaxed.pixel(i, j).iter().all(|&v| v == 0.0));
                    continue;
                };
                if report.active[k] == 0 {
                    prop_assert!(gated.pixel(i, j).iter().all(|&v| v == 0.0));
                } else {
                    prop_assert_eq!(gated.pixel(i, j), relaxed.pixel(i, j));
                }
            }
        }
    }

    #[test]
    fn relaxed_is_convex_along_segments(a in any::<u64>(), b in any::<u64>(), alpha in 0.0f64..=1.0) {
        let (raster, target) = small();
        let x1 = sample(&raster, a, 0.5);
        let x2 = sample(&raster.inverted(), b, 0.5);
        let mid = x1.lerp(&x2, alpha).unwrap();
        let l = |x: &RasterImage| srl_relaxed(x, &target, 0.5).unwrap();
        prop_assert!(l(&mid) <= alpha * l(&x1) + (1.0 - alpha) * l(&x2) + 1e-12);
    }
}
