//! The `tgvd` command line.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when a solve
//! stops at `--max-iters` without reaching `--gap-tol`.

mod pgm;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::IoError;
use crate::grid::ScalarField;
use crate::pipeline::{
    self, add_noise, alpha_sweep, estimate_noise_mad, format_psnr, psnr, run_benchmark, synthetic_image,
    write_benchmark_csv, write_trace_csv, BenchmarkConfig, DenoiseOptions, Method, NamedImage, NoiseEstimate,
    ParamOverrides, StepOverrides,
};
use crate::solvers::{Algorithm, PreconditionerKind};

pub use pgm::{decode_pgm, encode_pgm, load_image, quantize, save_image};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tgvd", version, about = "Total-variation-family image denoising")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise one PGM image.
    Denoise(DenoiseArgs),
    /// Noisy synthetic or PGM images through several methods; CSV rows.
    Benchmark(BenchmarkArgs),
    /// PSNR over a grid of model weights; CSV rows.
    Sweep(SweepArgs),
    /// Relative-gap traces of one problem under several solvers.
    Traces(TracesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    Cp,
    Dr,
    DrInexact,
}

impl From<SolverChoice> for Algorithm {
    fn from(s: SolverChoice) -> Self {
        match s {
            SolverChoice::Cp => Algorithm::ChambollePock,
            SolverChoice::Dr => Algorithm::DrExact,
            SolverChoice::DrInexact => Algorithm::DrInexact,
        }
    }
}

/// Model parameters; unset values use the parameter-free defaults.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// Radius of the data ball (default: estimated noise norm).
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub delta2: Option<f64>,
    /// Constant in delta2 = c * TV(u0).
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "cp")]
    pub solver: SolverChoice,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub pcg_iters: Option<usize>,
    /// Plain CG in the inexact Douglas-Rachford resolvent.
    #[arg(long)]
    pub no_precond: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub gap_tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iters: usize,
}

impl SolverArgs {
    fn options(&self, params: &ParamArgs) -> DenoiseOptions {
        DenoiseOptions {
            algorithm: self.solver.into(),
            gap_tol: self.gap_tol,
            max_iters: self.max_iters,
            params: ParamOverrides {
                alpha: params.alpha,
                alpha0: params.alpha0,
                alpha1: params.alpha1,
                delta1: params.delta1,
                delta2: params.delta2,
                c: params.c,
            },
            steps: StepOverrides {
                tau: self.tau,
                sigma: self.sigma,
                s: self.s,
                t: self.t,
                rho: self.rho,
                pcg_iters: self.pcg_iters,
                preconditioner: self.no_precond.then_some(PreconditionerKind::None),
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[arg(long, default_value = "mtgv")]
    pub method: Method,
    /// Clean reference for the PSNR in the summary.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Treat the input as clean, add Gaussian noise of this standard
    /// deviation before denoising, and report PSNR against the input.
    #[arg(long)]
    pub add_noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes the `iter,relative_gap` trace of the last stage.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ImageSetArgs {
    /// Synthetic names (ramp, eye, smooth) or PGM paths.
    #[arg(long, value_delimiter = ',', default_value = "ramp,eye,smooth")]
    pub images: Vec<String>,
    /// Side length of synthetic images.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Noise standard deviations.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25")]
    pub factors: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', default_value = "dgtgv,mtgv")]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub set: ImageSetArgs,
    /// CSV destination (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Directory for per-row gap traces.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value = "dgtgv")]
    pub method: Method,
    /// Values of alpha (c for dgtv).
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.75,1,1.5,2,3")]
    pub grid: Vec<f64>,
    #[command(flatten)]
    pub set: ImageSetArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct TracesArgs {
    #[arg(long, default_value = "mtgv")]
    pub method: Method,
    #[arg(long, default_value = "eye")]
    pub image: String,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub factor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cp,dr,dr-inexact")]
    pub solvers: Vec<SolverChoice>,
    /// Output directory; one `<method>_<solver>.csv` per solver.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Errors surfaced by the command line, mapped to exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Pipeline(#[from] crate::error::PipelineError),
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_trace_file(trace: &[(usize, f64)], path: &Path) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_trace_csv(trace, BufWriter::new(file)).map_err(csv_err(path))
}

fn load_set(set: &ImageSetArgs) -> Result<Vec<NamedImage>, CliError> {
    set.images
        .iter()
        .map(|name| match synthetic_image(name, set.size) {
            Some(image) => Ok(NamedImage::new(name.clone(), image)),
            None => {
                let path = Path::new(name);
                let id = path.file_stem().map_or(name.clone(), |s| s.to_string_lossy().into_owned());
                Ok(NamedImage::new(id, load_image(path)?))
            }
        })
        .collect()
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, IoError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn estimate_for(u0: &ScalarField, params: &ParamArgs) -> Result<NoiseEstimate, CliError> {
    match estimate_noise_mad(u0) {
        Ok(e) => Ok(e),
        // Small images cannot be estimated; an explicit delta1 suffices.
        Err(err) if params.delta1.is_some() => {
            log::info!("{err}; using --delta1");
            Ok(NoiseEstimate::from_sigma(0.0, u0.rows(), u0.cols()))
        }
        Err(err) => Err(err.into()),
    }
}

fn run_denoise(args: &DenoiseArgs) -> Result<i32, CliError> {
    let input = load_image(&args.input)?;
    let (u0, reference) = match args.add_noise {
        Some(factor) => {
            let id = args.input.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            (add_noise(&input, &id, factor, args.seed), Some(input))
        }
        None => (input, args.ground_truth.as_ref().map(load_image).transpose()?),
    };
    let estimate = estimate_for(&u0, &args.params)?;
    let options = args.solver.options(&args.params);
    let outcome = pipeline::denoise(args.method, &u0, &estimate, &options)?;
    save_image(&outcome.image, &args.output)?;
    if let (Some(path), Some(stage)) = (&args.trace, outcome.stages.last()) {
        write_trace_file(&stage.report.gap_trace, path)?;
    }
    let mut summary = format!(
        "method={} solver={} iters={} rel_gap={:.3e} converged={} time={:.3}s sigma_hat={:.4}",
        args.method,
        Algorithm::from(args.solver.solver).name(),
        outcome.iterations(),
        outcome.relative_gap(),
        outcome.converged(),
        outcome.wall_time().as_secs_f64(),
        estimate.sigma,
    );
    if let Some(reference) = reference {
        let db = psnr(&outcome.image, &reference).map_err(|e| CliError::Usage(format!("ground truth: {e}")))?;
        summary.push_str(&format!(" psnr={}", format_psnr(db)));
    }
    println!("{summary}");
    Ok(if outcome.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn run_benchmark_cmd(args: &BenchmarkArgs) -> Result<i32, CliError> {
    let images = load_set(&args.set)?;
    let config = BenchmarkConfig {
        options: args.solver.options(&args.params),
        seed: args.set.seed,
        threads: None,
    };
    let result = run_benchmark(&images, &args.set.factors, &args.methods, &config);
    let out = open_output(args.output.as_deref())?;
    let dest = args.output.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    write_benchmark_csv(&result.rows, out).map_err(csv_err(&dest))?;
    if let Some(dir) = &args.trace {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for row in &result.rows {
            for (k, trace) in row.gap_traces.iter().enumerate() {
                let name = format!("{}_{}_{}_stage{}.csv", row.image, row.factor, row.method, k + 1);
                write_trace_file(trace, &dir.join(name))?;
            }
        }
    }
    for f in &result.failures {
        eprintln!("failed: {} factor={} method={}: {}", f.image, f.factor, f.method, f.error);
    }
    let converged = result.rows.iter().all(|r| r.converged);
    eprintln!(
        "benchmark: {} rows, {} failures, all converged: {converged}",
        result.rows.len(),
        result.failures.len()
    );
    Ok(if !result.failures.is_empty() {
        EXIT_USAGE
    } else if converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn run_sweep(args: &SweepArgs) -> Result<i32, CliError> {
    let images = load_set(&args.set)?;
    let config = BenchmarkConfig {
        options: args.solver.options(&args.params),
        seed: args.set.seed,
        threads: None,
    };
    let results = alpha_sweep(args.method, &images, &args.set.factors, &args.grid, &config);
    let dest = args.output.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut w = csv::Writer::from_writer(open_output(args.output.as_deref())?);
    let write = |w: &mut csv::Writer<Box<dyn Write>>| -> csv::Result<()> {
        w.write_record(["image", "factor", "method", "parameter", "value", "psnr_db", "best"])?;
        for r in &results {
            for &(value, db) in &r.psnrs {
                w.write_record([
                    r.image.clone(),
                    r.factor.to_string(),
                    r.method.name().to_string(),
                    r.parameter.to_string(),
                    value.to_string(),
                    format_psnr(db),
                    (value == r.best_value).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(csv_err(&dest))?;
    Ok(EXIT_OK)
}

fn run_traces(args: &TracesArgs) -> Result<i32, CliError> {
    let clean = synthetic_image(&args.image, args.size)
        .map_or_else(|| load_image(&args.image), Ok)?;
    let u0 = add_noise(&clean, &args.image, args.factor, args.seed);
    let estimate = estimate_for(&u0, &args.params)?;
    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let mut code = EXIT_OK;
    for &choice in &args.solvers {
        let mut options = args.solver.options(&args.params);
        options.algorithm = choice.into();
        let outcome = pipeline::denoise(args.method, &u0, &estimate, &options)?;
        let name = format!("{}_{}.csv", args.method, options.algorithm.name());
        let trace: Vec<(usize, f64)> = outcome.stages.last().map(|s| s.report.gap_trace.clone()).unwrap_or_default();
        write_trace_file(&trace, &args.out_dir.join(&name))?;
        println!(
            "{name}: iters={} rel_gap={:.3e} time={:.3}s psnr={}",
            outcome.iterations(),
            outcome.relative_gap(),
            outcome.wall_time().as_secs_f64(),
            format_psnr(psnr(&outcome.image, &clean).map_err(|e| CliError::Usage(e.to_string()))?)
        );
        if !outcome.converged() {
            code = EXIT_NOT_CONVERGED;
        }
    }
    Ok(code)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Denoise(a) => run_denoise(a),
        Command::Benchmark(a) => run_benchmark_cmd(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Traces(a) => run_traces(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_USAGE
        }
    }
}
