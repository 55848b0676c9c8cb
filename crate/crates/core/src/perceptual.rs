//! Multi-scale fidelity term used in place of a learned perceptual metric.
//!
//! `R(x, r) = Σ_l ‖P_l x − P_l r‖² / n_l` over a three-level pyramid where
//! `P_0` is the identity and each further level is a 2×2 box blur followed by
//! ×2 decimation of the previous one (odd trailing rows/columns are dropped).
//! `n_l` is the number of components at level `l`. Every `P_l` is linear, so
//! `R` is a convex quadratic in `x`, minimized at `x = r`.

use crate::error::{Error, Result};
use crate::par;
use crate::raster::RasterImage;

pub const LEVELS: usize = 3;

/// 2×2 mean pooling.
fn downsample(img: &RasterImage) -> RasterImage {
    let (h, w, c) = (img.height() / 2, img.width() / 2, img.channels());
    let src = img.data();
    let src_row = img.row_len();
    let mut out = RasterImage::filled(h, w, c, 0.0);
    if h == 0 || w == 0 {
        return out;
    }
    par::for_each_chunk(out.data_mut(), w * c, |i, row| {
        let top = &src[2 * i * src_row..][..src_row];
        let bottom = &src[(2 * i + 1) * src_row..][..src_row];
        for j in 0..w {
            for ch in 0..c {
                let (a, b) = (2 * j * c + ch, (2 * j + 1) * c + ch);
                row[j * c + ch] = 0.25 * (top[a] + top[b] + bottom[a] + bottom[b]);
            }
        }
    });
    out
}

/// Adds the adjoint of [`downsample`] applied to `grad` into `acc`.
fn add_upsample_adjoint(grad: &RasterImage, acc: &mut RasterImage) {
    let (gw, c) = (grad.width(), grad.channels());
    let (gh, g_row, acc_row) = (grad.height(), grad.row_len(), acc.row_len());
    let g = grad.data();
    par::for_each_chunk(acc.data_mut(), acc_row, |i, row| {
        if i / 2 >= gh {
            return;
        }
        let src = &g[(i / 2) * g_row..][..g_row];
        for j in 0..2 * gw {
            for ch in 0..c {
                row[j * c + ch] += 0.25 * src[(j / 2) * c + ch];
            }
        }
    });
}

fn pyramid(img: &RasterImage) -> Vec<RasterImage> {
    let mut levels = vec![img.clone()];
    for _ in 1..LEVELS {
        let next = downsample(levels.last().unwrap());
        levels.push(next);
    }
    levels
}

/// Fidelity to a fixed reference image.
#[derive(Debug, Clone)]
pub struct PerceptualRegularizer {
    reference: Vec<RasterImage>,
}

impl PerceptualRegularizer {
    pub fn new(reference: &RasterImage) -> Self {
        Self {
            reference: pyramid(reference),
        }
    }

    pub fn reference(&self) -> &RasterImage {
        &self.reference[0]
    }

    fn check(&self, x: &RasterImage) -> Result<()> {
        if !x.same_shape(self.reference()) {
            return Err(Error::DimensionMismatch(format!(
                "reference is {}x{}x{}, image is {}x{}x{}",
                self.reference().height(),
                self.reference().width(),
                self.reference().channels(),
                x.height(),
                x.width(),
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &RasterImage) -> Result<f64> {
        self.check(x)?;
        Ok(pyramid(x)
            .iter()
            .zip(&self.reference)
            .filter(|(a, _)| !a.data().is_empty())
            .map(|(a, r)| {
                let ssd: f64 = a.data().iter().zip(r.data()).map(|(p, q)| (p - q) * (p - q)).sum();
                ssd / a.data().len() as f64
            })
            .sum())
    }

    pub fn gradient(&self, x: &RasterImage) -> Result<RasterImage> {
        self.check(x)?;
        // Pooling is linear, so the level-l residual is P_l(x - r); only the
        // full-resolution residual has to be formed explicitly.
        let mut residual = x.clone();
        let rd = self.reference().data();
        let row = x.row_len().max(1);
        par::for_each_chunk(residual.data_mut(), row, |i, chunk| {
            for (v, r) in chunk.iter_mut().zip(&rd[i * row..]) {
                *v -= r;
            }
        });
        let mut levels = vec![residual];
        for _ in 1..LEVELS {
            let next = downsample(levels.last().unwrap());
            levels.push(next);
        }
        // Walk from the coarsest level down, pushing gradients through the
        // pooling adjoint.
        let mut acc: Option<RasterImage> = None;
        for mut g in levels.into_iter().rev() {
            let scale = 2.0 / g.data().len().max(1) as f64;
            par::for_each_mut(g.data_mut(), |v| *v *= scale);
            if let Some(coarser) = acc.take() {
                add_upsample_adjoint(&coarser, &mut g);
            }
            acc = Some(g);
        }
        Ok(acc.expect("at least one level"))
    }
}

/// `R(x, reference)`.
pub fn perceptual_distance(x: &RasterImage, reference: &RasterImage) -> Result<f64> {
    PerceptualRegularizer::new(reference).value(x)
}
