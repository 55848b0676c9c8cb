//! `srqr` command-line front end.
//!
//! Exit codes: `0` success (or scannable), `1` evaluated image not
//! scannable, `2` input or I/O error, `3` optimization did not reach a
//! strictly scannable output.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use srqr_core::srpgd::PgdRecord;
use srqr_core::texture::procedural_texture;
use srqr_core::{
    ec_capacity, encode, mismatch_report, overlay, render, srpgd, srpgd_perceptual, EcLevel, ErrorReport, ModuleMatrix,
    PgdConfig, PgdOutcome, PgdTrace, QrSpec, RasterImage, Schedule, Srl, SrlReport, TargetBitmap,
};

pub mod imageio;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_SCANNABLE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

pub const DEFAULT_PAYLOAD: &str = "Thanks reviewer!";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] srqr_core::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "srqr", about = "Scanning-robust QR code tools", disable_version_flag = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a plain QR code plus a JSON sidecar.
    Encode {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value = "code.png")]
        out: PathBuf,
    },
    /// Optimize a reference image into a scannable code.
    Beautify {
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        pgd: PgdArgs,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value = "beautified.png")]
        out: PathBuf,
    },
    /// Score an image against the code it should carry.
    Evaluate {
        image: PathBuf,
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Run the optimizer once per SRL weight and tabulate the traces.
    Sweep {
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        pgd: PgdArgs,
        /// Detachment tolerance (default: the EC level's capacity).
        #[arg(long)]
        tau: Option<f64>,
        /// Comma-separated SRL weights; each overrides `--lambda1`.
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        /// Output directory.
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Summarize a JSON-lines trace.
    Report { trace: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct CodeArgs {
    #[arg(long, default_value = DEFAULT_PAYLOAD)]
    pub payload: String,
    /// QR version (1-10).
    #[arg(long, default_value_t = 3)]
    pub version: u8,
    #[arg(long, default_value = "H", value_parser = parse_level)]
    pub ec_level: EcLevel,
    #[arg(long, default_value_t = 4)]
    pub mask: u8,
    #[arg(long, default_value_t = 20)]
    pub module_px: usize,
    #[arg(long, default_value_t = 80)]
    pub padding_px: usize,
}

fn parse_level(s: &str) -> Result<EcLevel, String> {
    s.parse().map_err(|e: srqr_core::Error| e.to_string())
}

impl CodeArgs {
    pub fn spec(&self) -> QrSpec {
        QrSpec {
            version: self.version,
            ec_level: self.ec_level,
            mask: self.mask,
            module_px: self.module_px,
            padding_px: self.padding_px,
        }
    }

    fn build(&self) -> Result<(QrSpec, ModuleMatrix, RasterImage, TargetBitmap), CliError> {
        let spec = self.spec();
        let matrix = encode(self.payload.as_bytes(), &spec)?;
        let (raster, target) = render(&matrix, &spec)?;
        Ok((spec, matrix, raster, target))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Reference image; a procedural texture from `--seed` when absent.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct PgdArgs {
    /// Gaussian sigma in pixels (default module_px / 6).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long, default_value = "inverse-sqrt", value_parser = parse_schedule)]
    pub schedule: Schedule,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub stop_tol: f64,
    #[arg(long, default_value_t = 500.0)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda2: f64,
    /// Descend on the gated loss instead of the relaxed one.
    #[arg(long)]
    pub gated: bool,
    /// Release the SRL term on steps where the error rate is below tau.
    #[arg(long)]
    pub detach: bool,
}

fn parse_schedule(s: &str) -> Result<Schedule, String> {
    match s {
        "constant" => Ok(Schedule::Constant),
        "inverse-sqrt" => Ok(Schedule::InverseSqrt),
        other => Err(format!("unknown schedule {other:?} (constant | inverse-sqrt)")),
    }
}

impl PgdArgs {
    pub fn config(&self, tau: f64) -> Result<PgdConfig, CliError> {
        let config = PgdConfig {
            step_size: self.step,
            max_iters: self.max_iters,
            schedule: self.schedule,
            stop_tol: self.stop_tol,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            sigma: self.sigma,
            gated: self.gated,
            detach_tau: self.detach.then_some(tau),
        };
        config.validate()?;
        Ok(config)
    }
}

fn resolve_tau(tau: Option<f64>, level: EcLevel) -> Result<f64, CliError> {
    let tau = tau.unwrap_or_else(|| ec_capacity(level));
    if !(0.0..=1.0).contains(&tau) {
        return Err(CliError::Input(format!("--tau must lie in [0, 1], got {tau}")));
    }
    Ok(tau)
}

/// Starting image: the reference (or texture) fitted to the raster with a
/// white quiet zone.
pub fn starting_image(reference: Option<&Path>, seed: u64, spec: &QrSpec) -> Result<RasterImage, CliError> {
    let side = spec.raster_side();
    let mut x0 = match reference {
        Some(path) => imageio::fit_square(&imageio::load_rgb(path)?, side),
        None => procedural_texture(side, side, seed),
    };
    spec.geometry().clear_quiet_zone(&mut x0)?;
    Ok(x0)
}

/// Optimizer output after 8-bit quantization, as it would be written to PNG.
pub fn quantize(img: &RasterImage) -> RasterImage {
    RasterImage::from_u8(img.height(), img.width(), img.channels(), &img.to_u8()).expect("same shape")
}

fn optimize(x0: &RasterImage, target: &TargetBitmap, config: &PgdConfig) -> Result<PgdOutcome, CliError> {
    Ok(if config.lambda2 > 0.0 {
        srpgd_perceptual(x0, target, x0, config)?
    } else {
        srpgd(x0, target, config)?
    })
}

/// One optimizer run per weight, run concurrently, results in input order.
pub fn sweep(
    x0: &RasterImage,
    target: &TargetBitmap,
    config: &PgdConfig,
    lambdas: &[f64],
) -> Result<Vec<PgdOutcome>, CliError> {
    lambdas
        .par_iter()
        .map(|&lambda1| optimize(x0, target, &PgdConfig { lambda1, ..*config }))
        .collect()
}

#[derive(Serialize)]
struct SweepRow {
    lambda: f64,
    iter: usize,
    loss: f64,
    error_rate: f64,
    grad_norm: f64,
}

/// Combined CSV with columns `lambda,iter,loss,error_rate,grad_norm`.
pub fn sweep_csv(lambdas: &[f64], traces: &[&PgdTrace]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (&lambda, trace) in lambdas.iter().zip(traces) {
        for r in &trace.records {
            w.serialize(SweepRow {
                lambda,
                iter: r.iter,
                loss: r.loss,
                error_rate: r.error_rate,
                grad_norm: r.grad_norm,
            })
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// SHA-256 over the row-major module bits, one byte per module (`1` = dark).
pub fn matrix_digest(matrix: &ModuleMatrix) -> String {
    let bytes: Vec<u8> = matrix.bits().iter().map(|&b| u8::from(b)).collect();
    hex::encode(Sha256::digest(bytes))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn save_png(img: &RasterImage, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    imageio::save_png(img, path)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    payload: &'a str,
    spec: QrSpec,
    modules: usize,
    raster_side: usize,
    matrix_sha256: String,
}

fn cmd_encode(code: &CodeArgs, out: &Path) -> Result<i32, CliError> {
    let (spec, matrix, raster, _) = code.build()?;
    save_png(&raster, out)?;
    let sidecar = Sidecar {
        payload: &code.payload,
        spec,
        modules: matrix.size(),
        raster_side: spec.raster_side(),
        matrix_sha256: matrix_digest(&matrix),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    write(&out.with_extension("json"), json + "\n")?;
    println!("wrote {} ({}x{})", out.display(), raster.width(), raster.height());
    Ok(EXIT_OK)
}

fn cmd_beautify(
    code: &CodeArgs,
    source: &SourceArgs,
    pgd: &PgdArgs,
    tau: Option<f64>,
    out: &Path,
) -> Result<i32, CliError> {
    let tau = resolve_tau(tau, code.ec_level)?;
    let config = pgd.config(tau)?;
    let (spec, _, _, target) = code.build()?;
    let x0 = starting_image(source.reference.as_deref(), source.seed, &spec)?;
    let outcome = optimize(&x0, &target, &config)?;
    let written = quantize(&outcome.image);
    let report = mismatch_report(&written, &target, &spec, tau)?;

    save_png(&written, out)?;
    write(&sibling(out, ".trace.jsonl"), outcome.trace.to_jsonl())?;
    write(&sibling(out, ".report.json"), report.to_json() + "\n")?;
    println!(
        "iteration {} converged {} mismatch_rate {}",
        outcome.iteration, outcome.converged, report.mismatch_rate
    );
    Ok(if outcome.converged && report.scannable_strict {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

#[derive(Serialize)]
struct Evaluation<'a> {
    srl: &'a SrlReport,
    scan: &'a ErrorReport,
}

fn cmd_evaluate(image: &Path, code: &CodeArgs, sigma: Option<f64>, tau: Option<f64>) -> Result<i32, CliError> {
    let tau = resolve_tau(tau, code.ec_level)?;
    let (spec, _, _, target) = code.build()?;
    let img = imageio::load_rgb(image)?;
    target.check_image(&img)?;
    let srl = Srl::new(
        &target,
        sigma.unwrap_or_else(|| srqr_core::pixel_ops::default_sigma(spec.module_px)),
    )?
    .report(&img)?;
    let scan = mismatch_report(&img, &target, &spec, tau)?;
    save_png(&overlay(&img, &scan, &spec)?, &sibling(image, ".overlay.png"))?;
    let json = serde_json::to_string(&Evaluation { srl: &srl, scan: &scan }).expect("evaluation serializes");
    println!("{json}");
    Ok(if scan.scannable_tolerant {
        EXIT_OK
    } else {
        EXIT_NOT_SCANNABLE
    })
}

/// Trace file name for sweep branch `index`.
pub fn sweep_trace_name(index: usize, lambda: f64) -> String {
    format!("trace_{index:02}_lambda_{lambda}.jsonl")
}

fn cmd_sweep(
    code: &CodeArgs,
    source: &SourceArgs,
    pgd: &PgdArgs,
    tau: Option<f64>,
    lambdas: &[f64],
    out: &Path,
) -> Result<i32, CliError> {
    if lambdas.is_empty() {
        return Err(CliError::Input("--lambdas needs at least one value".into()));
    }
    let config = pgd.config(resolve_tau(tau, code.ec_level)?)?;
    for &l in lambdas {
        PgdConfig { lambda1: l, ..config }.validate()?;
    }
    let (spec, _, _, target) = code.build()?;
    let x0 = starting_image(source.reference.as_deref(), source.seed, &spec)?;
    let outcomes = sweep(&x0, &target, &config, lambdas)?;

    for (i, (&lambda, o)) in lambdas.iter().zip(&outcomes).enumerate() {
        write(&out.join(sweep_trace_name(i, lambda)), o.trace.to_jsonl())?;
        println!(
            "lambda {lambda}: {} records, converged {}, final error_rate {}",
            o.trace.len(),
            o.converged,
            o.trace.records.last().map_or(f64::NAN, |r| r.error_rate)
        );
    }
    let traces: Vec<&PgdTrace> = outcomes.iter().map(|o| &o.trace).collect();
    write(&out.join("sweep.csv"), sweep_csv(lambdas, &traces)?)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
pub struct TraceSummary {
    pub records: usize,
    pub first: Option<PgdRecord>,
    pub last: Option<PgdRecord>,
    pub first_zero_error: Option<usize>,
    pub min_error_rate: Option<f64>,
}

pub fn summarize(trace: &PgdTrace) -> TraceSummary {
    TraceSummary {
        records: trace.len(),
        first: trace.records.first().copied(),
        last: trace.records.last().copied(),
        first_zero_error: trace.first_zero_error(),
        min_error_rate: trace.records.iter().map(|r| r.error_rate).reduce(f64::min),
    }
}

fn cmd_report(path: &Path) -> Result<i32, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let trace = PgdTrace::from_jsonl(&text)?;
    println!(
        "{}",
        serde_json::to_string(&summarize(&trace)).expect("summary serializes")
    );
    Ok(EXIT_OK)
}

pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Encode { code, out } => cmd_encode(code, out),
        Command::Beautify {
            code,
            source,
            pgd,
            tau,
            out,
        } => cmd_beautify(code, source, pgd, *tau, out),
        Command::Evaluate {
            image,
            code,
            sigma,
            tau,
        } => cmd_evaluate(image, code, *sigma, *tau),
        Command::Sweep {
            code,
            source,
            pgd,
            tau,
            lambdas,
            out,
        } => cmd_sweep(code, source, pgd, *tau, lambdas, out),
        Command::Report { trace } => cmd_report(trace),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
