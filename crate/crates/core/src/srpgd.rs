//! Box-projected gradient descent on the relaxed scanning-robust loss.
//!
//! Each step is `x ← Proj_[0,1](x − η_t · N · ∇J(x))` where
//! `J = λ₁·L̃ + λ₂·R`, `N` is the module count and `R` the optional
//! [`PerceptualRegularizer`] term. The factor `N` makes `step_size` a per-module
//! quantity: `L̃` averages over modules, so its raw per-pixel gradients shrink
//! as `1/N` and an unscaled step would depend on the code version.
//!
//! With `detach_tau` set, steps taken while the error rate is below that
//! tolerance use only the fidelity term.
//!
//! Iteration stops at the first iterate with zero module error rate and loss
//! at most `stop_tol`; otherwise the best iterate seen (lowest error rate, then
//! lowest loss) is returned with `converged = false`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::perceptual::PerceptualRegularizer;
use crate::pixel_ops::default_sigma;
use crate::raster::RasterImage;
use crate::srl::{self, Srl};
use crate::target::TargetBitmap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Constant,
    /// `η_t = η / √(t + 1)`.
    InverseSqrt,
}

impl Schedule {
    pub fn step(self, base: f64, t: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::InverseSqrt => base / ((t + 1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    /// Base step `η`, per module (see module docs).
    pub step_size: f64,
    pub max_iters: usize,
    pub schedule: Schedule,
    /// Required loss once the error rate is zero.
    pub stop_tol: f64,
    /// Weight of the scanning-robust term.
    pub lambda1: f64,
    /// Weight of the fidelity term.
    pub lambda2: f64,
    /// Gaussian σ in pixels; `None` means `module_px / 6`.
    pub sigma: Option<f64>,
    /// Descend on the gated loss (φ held fixed each step) instead of the relaxed one.
    pub gated: bool,
    /// Drop the scanning-robust term on steps where the error rate is
    /// already below this tolerance (see [`detach_check`]).
    #[serde(default)]
    pub detach_tau: Option<f64>,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            max_iters: 1000,
            schedule: Schedule::InverseSqrt,
            stop_tol: 1e-4,
            lambda1: 500.0,
            lambda2: 0.0,
            sigma: None,
            gated: false,
            detach_tau: None,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if self.stop_tol.is_nan() || self.stop_tol < 0.0 {
            return bad(format!("stop_tol must be non-negative, got {}", self.stop_tol));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) || !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad(format!(
                "weights must be non-negative, got lambda1={} lambda2={}",
                self.lambda1, self.lambda2
            ));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma must be positive, got {s}"));
            }
        }
        if let Some(tau) = self.detach_tau {
            if !(0.0..=1.0).contains(&tau) {
                return bad(format!("detach tolerance must lie in [0, 1], got {tau}"));
            }
        }
        Ok(())
    }

    pub fn sigma_for(&self, module_px: usize) -> f64 {
        self.sigma.unwrap_or_else(|| default_sigma(module_px))
    }
}

/// State at one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdRecord {
    pub iter: usize,
    /// Relaxed loss `L̃`.
    pub loss: f64,
    pub error_rate: f64,
    /// Euclidean norm of `∇J`.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PgdTrace {
    pub records: Vec<PgdRecord>,
}

impl PgdTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::InvalidParameter(format!("bad trace line: {e}"))))
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }

    /// First iteration whose error rate is zero.
    pub fn first_zero_error(&self) -> Option<usize> {
        self.records.iter().find(|r| r.error_rate == 0.0).map(|r| r.iter)
    }

    /// Error rate at iteration `t`, holding the final value once the run stopped.
    pub fn error_rate_at(&self, t: usize) -> Option<f64> {
        self.records
            .iter()
            .take_while(|r| r.iter <= t)
            .last()
            .map(|r| r.error_rate)
    }
}

#[derive(Debug, Clone)]
pub struct PgdOutcome {
    pub image: RasterImage,
    pub trace: PgdTrace,
    pub converged: bool,
    /// Iteration index of the returned image.
    pub iteration: usize,
}

/// Component-wise clamp into `[0, 1]`.
pub fn project(img: &RasterImage) -> RasterImage {
    let mut out = img.clone();
    project_in_place(&mut out);
    out
}

pub fn project_in_place(img: &mut RasterImage) {
    par::for_each_mut(img.data_mut(), |v| *v = v.clamp(0.0, 1.0));
}

/// `true` when the module error rate has dropped strictly below `tau`.
pub fn detach_check(x: &RasterImage, target: &TargetBitmap, tau: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(srl::error_rate(x, target)? < tau)
}

/// Relaxed-loss descent with no fidelity term.
pub fn srpgd(x0: &RasterImage, target: &TargetBitmap, config: &PgdConfig) -> Result<PgdOutcome> {
    run(x0, target, None, config)
}

/// Descent on `λ₁·L̃ + λ₂·R(·, reference)`.
pub fn srpgd_perceptual(
    x0: &RasterImage,
    target: &TargetBitmap,
    reference: &RasterImage,
    config: &PgdConfig,
) -> Result<PgdOutcome> {
    if !reference.same_shape(x0) {
        return Err(Error::DimensionMismatch(
            "reference and starting image differ in shape".into(),
        ));
    }
    let reg = PerceptualRegularizer::new(reference);
    run(x0, target, Some(&reg), config)
}

fn run(
    x0: &RasterImage,
    target: &TargetBitmap,
    regularizer: Option<&PerceptualRegularizer>,
    config: &PgdConfig,
) -> Result<PgdOutcome> {
    config.validate()?;
    target.check_image(x0)?;
    if !x0.is_normalized() {
        return Err(Error::InvalidParameter("starting image must lie in [0, 1]".into()));
    }
    let loss = Srl::new(target, config.sigma_for(target.geometry().module_px))?;
    let n = loss.num_modules() as f64;
    let use_fidelity = regularizer.filter(|_| config.lambda2 > 0.0);

    let mut x = x0.clone();
    let mut trace = PgdTrace::default();
    let mut best: Option<(f64, f64, usize, RasterImage)> = None;

    for t in 0..=config.max_iters {
        let scan = loss.scan(&x)?;
        let relaxed = scan.relaxed_loss();
        let rate = scan.error_rate();
        let stop_loss = if config.gated { scan.gated_loss() } else { relaxed };

        let detached = config.detach_tau.is_some_and(|tau| rate < tau);
        let mut grad = if config.lambda1 > 0.0 && !detached {
            let mut g = loss.gradient(&x, !config.gated)?;
            if config.lambda1 != 1.0 {
                par::for_each_mut(g.data_mut(), |v| *v *= config.lambda1);
            }
            g
        } else {
            RasterImage::filled(x.height(), x.width(), x.channels(), 0.0)
        };
        if let Some(reg) = use_fidelity {
            let gr = reg.gradient(&x)?;
            for (a, b) in grad.data_mut().iter_mut().zip(gr.data()) {
                *a += config.lambda2 * b;
            }
        }

        trace.records.push(PgdRecord {
            iter: t,
            loss: relaxed,
            error_rate: rate,
            grad_norm: grad.l2_norm(),
        });

        if rate == 0.0 && stop_loss <= config.stop_tol {
            return Ok(PgdOutcome {
                image: x,
                trace,
                converged: true,
                iteration: t,
            });
        }

        let improves = match &best {
            None => true,
            Some((r, l, _, _)) => rate < *r || (rate == *r && relaxed < *l),
        };
        if improves {
            best = Some((rate, relaxed, t, x.clone()));
        }

        if t == config.max_iters {
            break;
        }

        let eta = config.schedule.step(config.step_size, t) * n;
        for (v, g) in x.data_mut().iter_mut().zip(grad.data()) {
            *v = (*v - eta * g).clamp(0.0, 1.0);
        }
    }

    let (_, _, iteration, image) = best.expect("at least one iterate");
    Ok(PgdOutcome {
        image,
        trace,
        converged: false,
        iteration,
    })
}
