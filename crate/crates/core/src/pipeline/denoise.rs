use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use crate::error::PipelineError;
use crate::grid::{self, ScalarField, VectorField};
use crate::problems::{Problem, ProblemSpec, Variant};
use crate::solvers::{self, Algorithm, PreconditionerKind, SolveReport, SolverConfig};

use super::params::{default_params_with, NoiseEstimate, ParamOverrides};

/// End-to-end denoising methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Constrained TV.
    Rof,
    /// Gradient denoising under an `l1` budget, then TV fit to it.
    Dgtv,
    /// Penalized gradient denoising, then TV fit to it.
    Dgtgv,
    Tgv,
    Mtgv,
    /// Morozov TGV solved in the `w = grad u - v` variables.
    MtgvW,
    Ctgv,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Rof,
        Method::Dgtv,
        Method::Dgtgv,
        Method::Tgv,
        Method::Mtgv,
        Method::MtgvW,
        Method::Ctgv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rof => "rof",
            Method::Dgtv => "dgtv",
            Method::Dgtgv => "dgtgv",
            Method::Tgv => "tgv",
            Method::Mtgv => "mtgv",
            Method::MtgvW => "mtgv-w",
            Method::Ctgv => "ctgv",
        }
    }

    /// The single-problem variant, or `None` for the two-stage methods.
    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::Rof => Some(Variant::RofConstrained),
            Method::Dgtv | Method::Dgtgv => None,
            Method::Tgv => Some(Variant::Tgv),
            Method::Mtgv => Some(Variant::Mtgv),
            Method::MtgvW => Some(Variant::MtgvW),
            Method::Ctgv => Some(Variant::Ctgv),
        }
    }

    /// The tuned parameter a sweep varies: `c` for DGTV, `alpha` otherwise.
    pub fn sweep_parameter(self) -> &'static str {
        if self == Method::Dgtv {
            "c"
        } else {
            "alpha"
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownMethod(pub String);

impl fmt::Display for UnknownMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown method `{}`", self.0)
    }
}

impl std::error::Error for UnknownMethod {}

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == lower || (lower == "mtgv_w" && *m == Method::MtgvW))
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

/// Step-size overrides applied on top of the per-variant defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepOverrides {
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub s: Option<f64>,
    pub t: Option<f64>,
    pub rho: Option<f64>,
    pub pcg_iters: Option<usize>,
    pub preconditioner: Option<PreconditionerKind>,
}

/// Solver settings shared by every stage of a denoising run.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOptions {
    pub algorithm: Algorithm,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub params: ParamOverrides,
    pub steps: StepOverrides,
}

impl Default for DenoiseOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::ChambollePock,
            gap_tol: 1e-4,
            max_iters: 20_000,
            params: ParamOverrides::default(),
            steps: StepOverrides::default(),
        }
    }
}

impl DenoiseOptions {
    /// Solver configuration for one stage.
    pub fn config_for(&self, variant: Variant) -> SolverConfig {
        let mut c = SolverConfig::for_variant(variant, self.algorithm).with_tolerance(self.gap_tol, self.max_iters);
        let s = &self.steps;
        if let Some(tau) = s.tau {
            c.tau = tau;
        }
        c.sigma = s.sigma.or(c.sigma);
        if let Some(v) = s.s {
            c.s = v;
        }
        if let Some(v) = s.t {
            c.t = v;
        }
        if let Some(v) = s.rho {
            c.rho = v;
        }
        if let Some(v) = s.pcg_iters {
            c.pcg_iters = v;
        }
        if let Some(v) = s.preconditioner {
            c.preconditioner = v;
        }
        c
    }
}

/// A solved stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub spec: ProblemSpec,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct TwoStageResult {
    pub image: ScalarField,
    pub gradient: VectorField,
    pub gradient_stage: StageResult,
    pub image_stage: StageResult,
}

/// Result of [`denoise`]: the image plus every stage that produced it.
#[derive(Debug, Clone)]
pub struct DenoiseOutcome {
    pub method: Method,
    pub image: ScalarField,
    pub stages: Vec<StageResult>,
}

impl DenoiseOutcome {
    pub fn iterations(&self) -> usize {
        self.stages.iter().map(|s| s.report.iterations).sum()
    }

    pub fn wall_time(&self) -> Duration {
        self.stages.iter().map(|s| s.report.wall_time).sum()
    }

    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.report.converged())
    }

    /// Relative gap of the last stage.
    pub fn relative_gap(&self) -> f64 {
        self.stages.last().map_or(f64::NAN, |s| s.report.relative_gap)
    }

    /// The model weight that was used (`alpha`, or `c` for DGTV).
    pub fn weight(&self) -> Option<f64> {
        let first = &self.stages.first()?.spec;
        match self.method {
            Method::Dgtv => first.c,
            Method::Tgv => first.alpha0,
            _ => first.alpha,
        }
    }
}

fn solve_stage(spec: ProblemSpec, config: &SolverConfig, stage: &'static str) -> Result<(Problem, SolveReport), PipelineError> {
    let problem = Problem::new(spec)?;
    let report = solvers::solve(&problem, config).map_err(|source| PipelineError::Stage { stage, source })?;
    if !report.converged() {
        log::info!(
            "{stage}: stopped after {} iterations at relative gap {:.3e}",
            report.iterations,
            report.relative_gap
        );
    }
    Ok((problem, report))
}

/// Two-stage gradient method: denoise `grad u0` (constrained for
/// [`Method::Dgtv`], penalized for [`Method::Dgtgv`]), then fit a TV image
/// to the denoised gradient inside the noise ball.
pub fn run_two_stage(
    method: Method,
    u0: &ScalarField,
    estimate: &NoiseEstimate,
    options: &DenoiseOptions,
) -> Result<TwoStageResult, PipelineError> {
    let first = match method {
        Method::Dgtv => Variant::Dgtv1,
        Method::Dgtgv => Variant::Dgtgv1,
        other => {
            return Err(PipelineError::Problem(crate::error::ProblemError::InvalidParameter {
                name: "method",
                value: f64::NAN,
                reason: if other == Method::Rof {
                    "rof is a single-stage method"
                } else {
                    "only dgtv and dgtgv have two stages"
                },
            }))
        }
    };
    let spec1 = default_params_with(first, u0, estimate, &options.params);
    let (p1, r1) = solve_stage(spec1.clone(), &options.config_for(first), "gradient stage")?;
    let gradient = p1.gradient_estimate(&r1.primal).expect("gradient variant");

    let spec2 = default_params_with(Variant::Dgtv2, u0, estimate, &options.params).with_v_hat(gradient.clone());
    let (p2, r2) = solve_stage(spec2.clone(), &options.config_for(Variant::Dgtv2), "image stage")?;
    let image = p2.image(&r2.primal).expect("image variant");
    Ok(TwoStageResult {
        image,
        gradient,
        gradient_stage: StageResult { spec: spec1, report: r1 },
        image_stage: StageResult { spec: spec2, report: r2 },
    })
}

/// Variants solved by `method`, in stage order.
fn stage_variants(method: Method) -> Vec<Variant> {
    match method {
        Method::Dgtv => vec![Variant::Dgtv1, Variant::Dgtv2],
        Method::Dgtgv => vec![Variant::Dgtgv1, Variant::Dgtv2],
        other => vec![other.variant().expect("single-stage method")],
    }
}

/// Checks every stage's parameters and solver configuration without
/// solving anything.
pub fn validate_options(
    method: Method,
    u0: &ScalarField,
    estimate: &NoiseEstimate,
    options: &DenoiseOptions,
) -> Result<(), PipelineError> {
    for variant in stage_variants(method) {
        let mut spec = default_params_with(variant, u0, estimate, &options.params);
        if variant == Variant::Dgtv2 {
            spec = spec.with_v_hat(VectorField::zeros(u0.rows(), u0.cols()));
        }
        spec.validate()?;
        options.config_for(variant).validate()?;
    }
    Ok(())
}

/// Parameter-free denoising with `method`, using `estimate` for the noise
/// level and `options` for overrides and solver settings. Without an
/// explicit `delta2`, CTGV takes it from a constrained TV presolve (see
/// [`ctgv_delta2_from_tv`]).
pub fn denoise(
    method: Method,
    u0: &ScalarField,
    estimate: &NoiseEstimate,
    options: &DenoiseOptions,
) -> Result<DenoiseOutcome, PipelineError> {
    validate_options(method, u0, estimate, options)?;
    match method.variant() {
        None => {
            let r = run_two_stage(method, u0, estimate, options)?;
            Ok(DenoiseOutcome {
                method,
                image: r.image,
                stages: vec![r.gradient_stage, r.image_stage],
            })
        }
        Some(variant) => {
            let mut params = options.params;
            if variant == Variant::Ctgv && params.delta2.is_none() {
                let c = params.c.unwrap_or(super::params::DEFAULT_C);
                params.delta2 = Some(ctgv_delta2_from_tv(u0, estimate, c, options)?);
            }
            let spec = default_params_with(variant, u0, estimate, &params);
            let (problem, report) = solve_stage(spec.clone(), &options.config_for(variant), "solve")?;
            let image = problem.image(&report.primal).expect("image variant");
            Ok(DenoiseOutcome {
                method,
                image,
                stages: vec![StageResult { spec, report }],
            })
        }
    }
}

/// `c |||grad u_TV|||_1` where `u_TV` solves constrained TV on `u0`; a
/// data-driven `delta2` for the combined constrained TGV model.
pub fn ctgv_delta2_from_tv(
    u0: &ScalarField,
    estimate: &NoiseEstimate,
    c: f64,
    options: &DenoiseOptions,
) -> Result<f64, PipelineError> {
    let spec = default_params_with(Variant::RofConstrained, u0, estimate, &options.params);
    let (problem, report) = solve_stage(spec, &options.config_for(Variant::RofConstrained), "tv presolve")?;
    let u = problem.image(&report.primal).expect("image variant");
    Ok(c * grid::mixed_norm_l1(&grid::grad(&u)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bm3d".parse::<Method>().is_err());
    }

    #[test]
    fn zero_noise_returns_input() {
        let u0 = ScalarField::from_fn(8, 8, |i, j, _| if i + j > 7 { 0.8 } else { 0.2 });
        let estimate = NoiseEstimate::from_sigma(0.0, 8, 8);
        let options = DenoiseOptions {
            max_iters: 50,
            ..DenoiseOptions::default()
        };
        let out = run_two_stage(Method::Dgtgv, &u0, &estimate, &options).unwrap();
        for (a, b) in out.image.as_slice().iter().zip(u0.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
