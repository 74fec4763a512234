//! Command-line surface: each command reads a [`RunConfig`], writes CSV data plus a JSON
//! manifest into the output directory and maps failures to exit codes.

mod config;
pub mod verify;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use config::{default_frequencies, BoxConfig, RunConfig};

use crate::asymptotics::{calibrate_leading, residual_fit, ExpansionTerm, RayProbe};
use crate::error::{Error, Result};
use crate::kernel::KernelMeta;
use crate::lattice::{join, Boundary, MultiIndex};
use crate::montecarlo::{box_bias, estimate_derivative, estimate_kdelta_form, with_workers};
use crate::perturbation::{positivity_scan, q_matrix, SeriesExpansion};
use crate::quadrature::AnnealedGreen;

pub const OUT_ENV: &str = "ANNEALED_GREEN_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        Error::Config(_)
        | Error::Dimension(_)
        | Error::DimensionMismatch { .. }
        | Error::Axis { .. }
        | Error::UnknownLaw(_)
        | Error::Contrast(_)
        | Error::Probe(_)
        | Error::Format(_)
        | Error::Resolution { .. }
        | Error::SeriesOrder { .. }
        | Error::Moments(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Parser, Debug)]
#[command(name = "annealed-green", version, about = "Annealed Green's function toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $ANNEALED_GREEN_OUT, then the config, then ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sampling (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Tabulate K^delta.
    Kernel,
    /// Annealed Green's function (or a derivative) at the configured points.
    Green,
    /// Monte Carlo estimates on a finite box.
    Mc,
    /// Residual fits of the leading asymptotics along rays.
    Asymptotics,
    /// Minimum of the walk kernel T over a box for a contrast sweep.
    Tscan,
    /// Run an acceptance suite.
    Verify {
        #[arg(long, value_parser = ["structural", "quadrature", "expansion", "oracle"])]
        suite: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Green => "green",
            Command::Mc => "mc",
            Command::Asymptotics => "asymptotics",
            Command::Tscan => "tscan",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Written as `manifest.json`; `config` is fully resolved, so rerunning it reproduces the
/// data files bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub struct Outcome {
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub passed: bool,
}

fn write(dir: &Path, name: &str, body: &str, outputs: &mut Vec<String>) -> Result<()> {
    fs::write(dir.join(name), body)?;
    outputs.push(name.to_string());
    Ok(())
}

fn header(prefix: &str, d: usize) -> String {
    (1..=d).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>().join(",")
}

pub fn cmd_kernel(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let model = cfg.model()?;
    let series = SeriesExpansion::new(&model, cfg.d, cfg.order, cfg.radius, cfg.series_resolution)?;
    let k = series.kernel(cfg.delta)?;
    let h = q_matrix(&k)?;
    let mut csv = Vec::new();
    k.write_csv(&mut csv)?;
    let meta = KernelMeta {
        d: cfg.d,
        delta: cfg.delta,
        radius: cfg.radius,
        model: model.name().to_string(),
        order: cfg.order,
        resolution: cfg.series_resolution,
    };
    let mut outputs = Vec::new();
    write(dir, "kernel.csv", std::str::from_utf8(&csv).expect("csv is utf-8"), &mut outputs)?;
    write(dir, "kernel.json", &serde_json::to_string_pretty(&meta)?, &mut outputs)?;
    let q: Vec<f64> = h.q().iter().copied().collect();
    Ok(Outcome {
        outputs,
        summary: serde_json::json!({ "entries": k.len(), "q": q, "sigma": h.sigma() }),
        passed: true,
    })
}

fn kernel_for(cfg: &RunConfig) -> Result<crate::kernel::MatrixKernel> {
    SeriesExpansion::new(&cfg.model()?, cfg.d, cfg.order, cfg.radius, cfg.series_resolution)?.kernel(cfg.delta)
}

pub fn cmd_green(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let k = kernel_for(cfg)?;
    let g = AnnealedGreen::new(&k, &cfg.quadrature())?;
    let alpha = MultiIndex::new(cfg.alpha.clone())?;
    let values = g.derivative_values(&cfg.points, &alpha)?;
    let mut csv = format!("{},value\n", header("x", cfg.d));
    for (x, v) in cfg.points.iter().zip(&values) {
        writeln!(csv, "{},{v:?}", join(x)).expect("string write");
    }
    let mut outputs = Vec::new();
    write(dir, "green.csv", &csv, &mut outputs)?;
    Ok(Outcome { outputs, summary: serde_json::json!({ "alpha": cfg.alpha, "values": values }), passed: true })
}

pub fn cmd_mc(cfg: &RunConfig, dir: &Path, workers: usize) -> Result<Outcome> {
    let mc = cfg.mc_config()?;
    let mut outputs = Vec::new();
    let summary = match cfg.mc.boundary {
        Boundary::ZeroExtension => {
            let alpha = MultiIndex::new(cfg.alpha.clone())?;
            let est = with_workers(workers, || estimate_derivative(&mc, &cfg.points, &alpha))??;
            // The box correction is only defined for undifferentiated values.
            let bias = if alpha.order() == 0 {
                let h = q_matrix(&kernel_for(cfg)?)?;
                box_bias(h.q(), cfg.mc.extent, &cfg.points)?
            } else {
                vec![0.0; cfg.points.len()]
            };
            let mut csv = format!("{},mean,stderr,n,failed,box_bias,corrected\n", header("x", cfg.d));
            for ((x, e), b) in cfg.points.iter().zip(&est).zip(&bias) {
                writeln!(csv, "{},{:?},{:?},{},{},{:?},{:?}", join(x), e.mean, e.stderr, e.n, e.failed, b, e.mean - b)
                    .expect("string write");
            }
            write(dir, "mc_green.csv", &csv, &mut outputs)?;
            serde_json::json!({ "estimates": est, "box_bias": bias })
        }
        Boundary::Periodic => {
            let est = with_workers(workers, || estimate_kdelta_form(&mc, &cfg.frequencies))??;
            let mut csv = format!("{},{},mean,stderr,n,imag_mean,imag_stderr\n", header("k", cfg.d), header("theta", cfg.d));
            for e in &est {
                writeln!(
                    csv,
                    "{},{},{:?},{:?},{},{:?},{:?}",
                    join(&e.frequency),
                    e.theta.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(","),
                    e.form.mean,
                    e.form.stderr,
                    e.form.n,
                    e.green_hat_imag.mean,
                    e.green_hat_imag.stderr
                )
                .expect("string write");
            }
            write(dir, "mc_form.csv", &csv, &mut outputs)?;
            serde_json::json!({ "estimates": est })
        }
    };
    Ok(Outcome { outputs, summary, passed: true })
}

pub fn cmd_asymptotics(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let k = kernel_for(cfg)?;
    let g = AnnealedGreen::new(&k, &cfg.quadrature())?;
    let h = g.homogenized().clone();
    let cal = calibrate_leading(cfg.d)?;
    let terms = vec![ExpansionTerm::leading(&h, cal.factor)];
    let mut csv = format!("{},exponent,amplitude,rms,sign,status\n", header("u", cfg.d));
    let mut fits = Vec::new();
    for u in &cfg.rays {
        let probe = RayProbe::near_radii(u.clone(), &cfg.radii)?;
        let values = g.values(&probe.points())?;
        let probe = probe.with_values(values)?;
        match residual_fit(&probe, &terms, &h) {
            Ok(f) => {
                writeln!(csv, "{},{:?},{:?},{:?},{:?},ok", join(u), f.exponent, f.amplitude, f.rms, f.sign)
                    .expect("string write");
                fits.push(serde_json::to_value(&f)?);
            }
            Err(Error::NoiseFloor) => {
                writeln!(csv, "{},NaN,NaN,NaN,NaN,noise-floor", join(u)).expect("string write");
                fits.push(serde_json::Value::Null);
            }
            Err(e) => return Err(e),
        }
    }
    let mut outputs = Vec::new();
    write(dir, "asymptotics.csv", &csv, &mut outputs)?;
    Ok(Outcome { outputs, summary: serde_json::json!({ "calibration": cal, "fits": fits }), passed: true })
}

pub fn cmd_tscan(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let series = SeriesExpansion::new(&cfg.model()?, cfg.d, cfg.order, cfg.radius, cfg.series_resolution)?;
    let rows = positivity_scan(&series, cfg.scan_radius, &cfg.sweep)?;
    let mut csv = format!("delta,min,{},sign\n", header("argmin", cfg.d));
    for r in &rows {
        let sign = serde_json::to_value(r.sign)?;
        writeln!(csv, "{:?},{:?},{},{}", r.delta, r.min, join(r.argmin.coords()), sign.as_str().unwrap_or("?"))
            .expect("string write");
    }
    let mut outputs = Vec::new();
    write(dir, "tscan.csv", &csv, &mut outputs)?;
    let negative = rows.iter().filter(|r| r.min < 0.0).count();
    Ok(Outcome { outputs, summary: serde_json::json!({ "rows": rows.len(), "negative_rows": negative }), passed: true })
}

pub fn cmd_verify(cfg: &RunConfig, suite: &str, dir: &Path, workers: usize) -> Result<Outcome> {
    let opts = verify::VerifyOptions::from_config(cfg, workers);
    let reports = verify::run_suite(suite, &opts)?;
    let passed = reports.iter().all(|r| r.status.is_success());
    let mut outputs = Vec::new();
    write(dir, "verify.json", &serde_json::to_string_pretty(&reports)?, &mut outputs)?;
    Ok(Outcome { outputs, summary: serde_json::json!({ "suite": suite, "passed": passed }), passed })
}

/// Runs one command to completion and writes its manifest.
pub fn run(command: &Command, cfg: &RunConfig, dir: &Path, workers: usize) -> Result<Outcome> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    fs::create_dir_all(dir)?;
    let start = Instant::now();
    let mut outcome = match command {
        Command::Kernel => cmd_kernel(&cfg, dir)?,
        Command::Green => cmd_green(&cfg, dir)?,
        Command::Mc => cmd_mc(&cfg, dir, workers)?,
        Command::Asymptotics => cmd_asymptotics(&cfg, dir)?,
        Command::Tscan => cmd_tscan(&cfg, dir)?,
        Command::Verify { suite } => cmd_verify(&cfg, suite, dir, workers)?,
    };
    let manifest = Manifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg,
        outputs: outcome.outputs.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        summary: outcome.summary.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    outcome.outputs.push("manifest.json".into());
    Ok(outcome)
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        // Suites run with their own fixed parameters; only d is needed.
        None if matches!(cli.command, Command::Verify { .. }) => RunConfig::new(3),
        None => return Err(Error::Config("--config is required for this command".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = load_config(&cli).and_then(|cfg| {
        let dir = output_dir(&cli, &cfg);
        run(&cli.command, &cfg, &dir, cli.workers).map(|o| (o, dir))
    });
    match result {
        Ok((o, dir)) => {
            for f in &o.outputs {
                println!("{}", dir.join(f).display());
            }
            if o.passed {
                EXIT_OK
            } else {
                eprintln!("verification failed; see {}", dir.join("verify.json").display());
                EXIT_VERIFY
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
