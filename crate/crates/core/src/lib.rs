//! Scanning-robust QR codes.
//!
//! * [`qr`]: byte-mode QR encoder with explicit mask selection.
//! * [`target`]: rendering to pixels and the per-pixel target bitmap.
//! * [`pixel_ops`]: gray-scale, binarization and module kernels.
//! * [`srl`]: the scanning-robust loss, its relaxed convex variant and gradients.
//! * [`srpgd`]: box-projected gradient descent on the relaxed loss.
//! * [`scanner`]: simulated module sampling, mismatch reports and overlays.
//! * [`texture`]: deterministic procedural reference images.
//!
//! With the default `parallel` feature per-module and per-row work runs on
//! rayon; without it everything runs on the calling thread with identical
//! results.

pub mod error;
mod par;
pub mod perceptual;
pub mod pixel_ops;
pub mod qr;
pub mod raster;
pub mod scanner;
pub mod srl;
pub mod srpgd;
pub mod target;
pub mod texture;

pub use error::{Error, Result};
pub use par::is_parallel;
pub use qr::{ec_capacity, encode, EcLevel, ModuleMatrix, QrSpec};
pub use raster::RasterImage;
pub use scanner::{mismatch_report, overlay, sample_modules, ErrorReport};
pub use srl::{error_rate, srl, srl_gradient, srl_relaxed, Srl, SrlReport};
pub use srpgd::{detach_check, project, srpgd, srpgd_perceptual, PgdConfig, PgdOutcome, PgdTrace, Schedule};
pub use target::{render, Geometry, ModuleRegion, TargetBitmap};
