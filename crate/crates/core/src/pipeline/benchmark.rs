//! Benchmark harness: noisy copies of test images, parameter-free solves,
//! PSNR and timing per `(image, factor, method)`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::PipelineError;
use crate::grid::ScalarField;

use super::denoise::{denoise, DenoiseOptions, Method};
use super::params::{estimate_noise_mad, ParamOverrides};
use super::psnr;
use super::synthetic::add_noise;

/// Fixed CSV header of benchmark output.
pub const BENCHMARK_HEADER: [&str; 7] = ["image", "factor", "method", "alpha", "psnr_db", "time_s", "iters"];

/// A named ground-truth image.
#[derive(Debug, Clone)]
pub struct NamedImage {
    pub id: String,
    pub image: ScalarField,
}

impl NamedImage {
    pub fn new(id: impl Into<String>, image: ScalarField) -> Self {
        Self { id: id.into(), image }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub options: DenoiseOptions,
    pub seed: u64,
    /// Worker threads; `None` reads `TGVD_THREADS`, else uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            options: DenoiseOptions::default(),
            seed: 0,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub image: String,
    pub factor: f64,
    pub method: Method,
    /// Model weight used (`alpha`, `alpha0` for TGV, `c` for DGTV).
    pub alpha: Option<f64>,
    pub psnr_db: f64,
    pub time_s: f64,
    pub iters: usize,
    /// PSNR of the noisy input.
    pub noisy_psnr_db: f64,
    pub converged: bool,
    /// Wall time of each stage.
    pub stage_times_s: Vec<f64>,
    /// `(iteration, relative gap)` traces, one per stage.
    pub gap_traces: Vec<Vec<(usize, f64)>>,
}

impl BenchmarkRow {
    /// The row without timings, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self {
            time_s: 0.0,
            stage_times_s: vec![0.0; self.stage_times_s.len()],
            ..self.clone()
        }
    }
}

#[derive(Debug)]
pub struct BenchmarkFailure {
    pub image: String,
    pub factor: f64,
    pub method: Method,
    pub error: PipelineError,
}

#[derive(Debug, Default)]
pub struct BenchmarkResult {
    /// Sorted by `(image, factor, method)` in input order.
    pub rows: Vec<BenchmarkRow>,
    pub failures: Vec<BenchmarkFailure>,
}

/// Thread count from `TGVD_THREADS`, if set to a positive integer.
pub fn env_threads() -> Option<usize> {
    std::env::var("TGVD_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> T {
    match threads.or_else(env_threads) {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(job),
            Err(err) => {
                log::warn!("could not build a {n}-thread pool ({err}); using the global pool");
                job()
            }
        },
        None => job(),
    }
}

fn run_one(
    image: &NamedImage,
    factor: f64,
    method: Method,
    options: &DenoiseOptions,
    seed: u64,
) -> Result<BenchmarkRow, PipelineError> {
    let noisy = add_noise(&image.image, &image.id, factor, seed);
    let estimate = estimate_noise_mad(&noisy)?;
    let outcome = denoise(method, &noisy, &estimate, options)?;
    Ok(BenchmarkRow {
        image: image.id.clone(),
        factor,
        method,
        alpha: outcome.weight(),
        psnr_db: psnr(&outcome.image, &image.image)?,
        time_s: outcome.wall_time().as_secs_f64(),
        iters: outcome.iterations(),
        noisy_psnr_db: psnr(&noisy, &image.image)?,
        converged: outcome.converged(),
        stage_times_s: outcome.stages.iter().map(|s| s.report.wall_time.as_secs_f64()).collect(),
        gap_traces: outcome.stages.iter().map(|s| s.report.gap_trace.clone()).collect(),
    })
}

/// Adds seeded noise to every image at every factor, estimates its level,
/// and denoises with every method using the parameter-free defaults.
/// Failed rows are collected in `failures`; the run continues.
pub fn run_benchmark(
    images: &[NamedImage],
    factors: &[f64],
    methods: &[Method],
    config: &BenchmarkConfig,
) -> BenchmarkResult {
    let jobs: Vec<(usize, usize, usize)> = (0..images.len())
        .flat_map(|i| (0..factors.len()).flat_map(move |f| (0..methods.len()).map(move |m| (i, f, m))))
        .collect();
    let outcomes: Vec<_> = with_pool(config.threads, || {
        jobs.par_iter()
            .map(|&(i, f, m)| run_one(&images[i], factors[f], methods[m], &config.options, config.seed))
            .collect()
    });
    let mut result = BenchmarkResult::default();
    for (&(i, f, m), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(row) => result.rows.push(row),
            Err(error) => {
                log::warn!("{} @ {} / {}: {error}", images[i].id, factors[f], methods[m]);
                result.failures.push(BenchmarkFailure {
                    image: images[i].id.clone(),
                    factor: factors[f],
                    method: methods[m],
                    error,
                })
            }
        }
    }
    result
}

/// PSNR for every swept parameter value of one `(image, factor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub image: String,
    pub factor: f64,
    pub method: Method,
    /// `alpha`, or `c` for DGTV.
    pub parameter: &'static str,
    /// `(value, psnr_db)` in grid order; failed solves are skipped.
    pub psnrs: Vec<(f64, f64)>,
    pub best_value: f64,
    pub best_psnr_db: f64,
}

/// Best model weight by PSNR against the ground truth, per image and
/// noise factor. DGTV sweeps `c`; the other methods sweep `alpha`.
pub fn alpha_sweep(
    method: Method,
    images: &[NamedImage],
    factors: &[f64],
    grid: &[f64],
    config: &BenchmarkConfig,
) -> Vec<SweepResult> {
    let jobs: Vec<(usize, usize, usize)> = (0..images.len())
        .flat_map(|i| (0..factors.len()).flat_map(move |f| (0..grid.len()).map(move |g| (i, f, g))))
        .collect();
    let psnrs: Vec<Option<f64>> = with_pool(config.threads, || {
        jobs.par_iter()
            .map(|&(i, f, g)| {
                let mut options = config.options.clone();
                options.params = sweep_overrides(method, options.params, grid[g]);
                match run_one(&images[i], factors[f], method, &options, config.seed) {
                    Ok(row) => Some(row.psnr_db),
                    Err(err) => {
                        log::warn!("sweep {} @ {} = {}: {err}", images[i].id, factors[f], grid[g]);
                        None
                    }
                }
            })
            .collect()
    });
    let mut out = Vec::new();
    for (chunk, (i, f)) in psnrs
        .chunks(grid.len().max(1))
        .zip((0..images.len()).flat_map(|i| (0..factors.len()).map(move |f| (i, f))))
    {
        let values: Vec<(f64, f64)> = grid
            .iter()
            .zip(chunk)
            .filter_map(|(&a, p)| p.map(|p| (a, p)))
            .collect();
        let (best_value, best_psnr_db) = values
            .iter()
            .copied()
            .fold((f64::NAN, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        out.push(SweepResult {
            image: images[i].id.clone(),
            factor: factors[f],
            method,
            parameter: method.sweep_parameter(),
            psnrs: values,
            best_value,
            best_psnr_db,
        });
    }
    out
}

fn sweep_overrides(method: Method, mut params: ParamOverrides, value: f64) -> ParamOverrides {
    match method {
        Method::Dgtv => params.c = Some(value),
        Method::Tgv => {
            // Keep the (alpha0, alpha1) ratio of the defaults.
            params.alpha0 = Some(value);
            params.alpha1 = Some(value / 2.0);
        }
        _ => params.alpha = Some(value),
    }
    params
}

/// Writes rows as CSV with the fixed [`BENCHMARK_HEADER`].
pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCHMARK_HEADER)?;
    for r in rows {
        w.write_record([
            r.image.clone(),
            r.factor.to_string(),
            r.method.name().to_string(),
            r.alpha.map_or_else(String::new, |a| a.to_string()),
            format_psnr(r.psnr_db),
            format!("{:.6}", r.time_s),
            r.iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a two-column `iter,relative_gap` trace.
pub fn write_trace_csv<W: Write>(trace: &[(usize, f64)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "relative_gap"])?;
    for (iter, gap) in trace {
        w.write_record([iter.to_string(), format!("{gap:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// `exact` for identical images, otherwise two decimals.
pub fn format_psnr(db: f64) -> String {
    if db == f64::INFINITY {
        "exact".to_string()
    } else {
        format!("{db:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synthetic_image;

    #[test]
    fn csv_header_is_fixed() {
        let mut buf = Vec::new();
        write_benchmark_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "image,factor,method,alpha,psnr_db,time_s,iters\n");
    }

    #[test]
    fn trace_csv() {
        let mut buf = Vec::new();
        write_trace_csv(&[(10, 0.5), (20, 0.25)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,relative_gap\n10,5e-1\n20,2.5e-1\n");
    }

    #[test]
    fn row_count_and_order() {
        let images = vec![
            NamedImage::new("ramp", synthetic_image("ramp", 12).unwrap()),
            NamedImage::new("eye", synthetic_image("eye", 12).unwrap()),
        ];
        let config = BenchmarkConfig {
            options: DenoiseOptions {
                max_iters: 30,
                ..DenoiseOptions::default()
            },
            seed: 1,
            threads: Some(2),
        };
        let r = run_benchmark(&images, &[0.05, 0.1], &[Method::Dgtgv, Method::Mtgv], &config);
        assert!(r.failures.is_empty());
        assert_eq!(r.rows.len(), 8);
        let keys: Vec<_> = r.rows.iter().map(|r| (r.image.as_str(), r.factor, r.method)).collect();
        assert_eq!(keys[0], ("ramp", 0.05, Method::Dgtgv));
        assert_eq!(keys[7], ("eye", 0.1, Method::Mtgv));
    }
}
