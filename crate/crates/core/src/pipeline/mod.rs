//! Parameter-free denoising: noise estimation, default parameters, the
//! two-stage gradient methods, PSNR and the benchmark harness.

mod benchmark;
mod denoise;
mod params;
mod synthetic;

use crate::error::GridError;
use crate::grid::ScalarField;

pub use benchmark::{
    alpha_sweep, env_threads, format_psnr, run_benchmark, write_benchmark_csv, write_trace_csv, BenchmarkConfig,
    BenchmarkFailure, BenchmarkResult, BenchmarkRow, NamedImage, SweepResult, BENCHMARK_HEADER,
};
pub use denoise::{
    ctgv_delta2_from_tv, denoise, run_two_stage, validate_options, DenoiseOptions, DenoiseOutcome, Method, StageResult, StepOverrides,
    TwoStageResult, UnknownMethod,
};
pub use params::{
    default_params, default_params_with, estimate_noise_mad, NoiseEstimate, ParamOverrides, DEFAULT_C,
    DEFAULT_DGTGV_ALPHA, DEFAULT_MTGV_ALPHA, DEFAULT_TGV_WEIGHTS,
};
pub use synthetic::{add_noise, noise_key, synthetic_image, SYNTHETIC_IMAGES};

/// Peak signal-to-noise ratio in dB for peak intensity 1:
/// `10 log10(MN / ||u - reference||^2)`; `+inf` for identical images.
pub fn psnr(u: &ScalarField, reference: &ScalarField) -> Result<f64, GridError> {
    if !u.same_shape(reference) {
        return Err(GridError::Shape(format!(
            "{:?} vs {:?}",
            u.shape(),
            reference.shape()
        )));
    }
    let sq: f64 = u
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if sq == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (u.pixels() as f64 / sq).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_of_uniform_error() {
        let a = ScalarField::from_fn(5, 7, |_, _, _| 0.3);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(format_psnr(f64::INFINITY), "exact");
        assert!(psnr(&a, &ScalarField::zeros(5, 6)).is_err());
    }
}
