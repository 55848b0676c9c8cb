//! Seeded procedural RGB textures used as stand-in reference images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::RasterImage;

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
}

/// Smooth color field: a few random plane waves mapped through a random
/// three-color palette, plus a little per-pixel grain.
///
/// The same `(height, width, seed)` always yields the same image.
pub fn procedural_texture(height: usize, width: usize, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = height.max(width).max(1) as f64;
    let waves: Vec<Wave> = (0..6)
        .map(|_| {
            let freq = rng.gen_range(1.0..8.0) * std::f64::consts::TAU / scale;
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            Wave {
                fx: freq * angle.cos(),
                fy: freq * angle.sin(),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                amp: rng.gen_range(0.3..1.0),
            }
        })
        .collect();
    let norm: f64 = waves.iter().map(|w| w.amp).sum();
    let palette: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen::<f64>()));
    let grain = rng.gen_range(0.0..0.08);

    RasterImage::from_fn(height, width, 3, |i, j, px| {
        let s: f64 = waves
            .iter()
            .map(|w| w.amp * (w.fx * j as f64 + w.fy * i as f64 + w.phase).sin())
            .sum::<f64>()
            / norm;
        // s ∈ [−1, 1] → piecewise-linear walk through the palette.
        let t = (s + 1.0) / 2.0;
        let (a, b, u) = if t < 0.5 {
            (palette[0], palette[1], t * 2.0)
        } else {
            (palette[1], palette[2], t * 2.0 - 1.0)
        };
        for c in 0..3 {
            let noise = grain * (rng.gen::<f64>() - 0.5);
            px[c] = ((1.0 - u) * a[c] + u * b[c] + noise).clamp(0.0, 1.0);
        }
    })
}
