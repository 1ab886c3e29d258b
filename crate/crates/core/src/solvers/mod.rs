//! First-order saddle-point solvers.
//!
//! Both solvers stop on the relative gap `gap / (1 + |objective|)` of the
//! monitored iterate, evaluated every `gap_check_every` iterations.

mod cp;
mod dr;
mod linear;

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SolverError;
use crate::grid::{dot, norm2};
use crate::problems::{SaddlePointProblem, Variant};
use crate::sparse::{Formulation, UwScaling};

pub use cp::{chambolle_pock, chambolle_pock_observed};
pub use dr::{douglas_rachford, douglas_rachford_observed};
pub use linear::{pcg, resolvent_linear, LinearMode, NormalOperator, PcgOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    ChambollePock,
    DrExact,
    DrInexact,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ChambollePock => "cp",
            Algorithm::DrExact => "dr",
            Algorithm::DrInexact => "dr-inexact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PreconditionerKind {
    None,
    #[default]
    IcholBlock,
}

/// Algorithm, step sizes and stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Primal step of Chambolle-Pock.
    pub tau: f64,
    /// Dual step of Chambolle-Pock; `None` means `1 / (tau * L^2)` with the
    /// formulation's bound `L^2 >= ||K||^2`.
    pub sigma: Option<f64>,
    /// Dual step of Douglas-Rachford.
    pub s: f64,
    /// Primal step of Douglas-Rachford.
    pub t: f64,
    /// Relaxation in `(0, 2)`.
    pub rho: f64,
    /// PCG iterations per inexact resolvent.
    pub pcg_iters: usize,
    pub preconditioner: PreconditionerKind,
    pub uw_scaling: UwScaling,
    /// Relative residual of the exact linear solves.
    pub exact_tol: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub gap_check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::ChambollePock,
            tau: 0.004,
            sigma: None,
            s: 60.0,
            t: 0.1,
            rho: 1.0,
            pcg_iters: 2,
            preconditioner: PreconditionerKind::IcholBlock,
            uw_scaling: UwScaling::Literal,
            exact_tol: 1e-10,
            gap_tol: 1e-4,
            max_iters: 20_000,
            gap_check_every: 10,
        }
    }
}

impl SolverConfig {
    /// Tuned step sizes for a variant and algorithm.
    pub fn for_variant(variant: Variant, algorithm: Algorithm) -> Self {
        let (tau, s, t) = match variant {
            Variant::Tgv => (0.008, 60.0, 0.28),
            Variant::Mtgv => (0.004, 60.0, 0.1),
            Variant::MtgvW | Variant::Ctgv => (0.004, 60.0, 0.04),
            Variant::RofConstrained | Variant::Dgtgv1 => (0.01, 60.0, 0.1),
            Variant::Dgtv1 => (0.004, 60.0, 0.1),
            Variant::Dgtv2 => (0.01, 60.0, 0.1),
        };
        Self {
            algorithm,
            tau,
            s,
            t,
            ..Self::default()
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn with_tolerance(mut self, gap_tol: f64, max_iters: usize) -> Self {
        self.gap_tol = gap_tol;
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SolverError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.tau, "tau")?;
        if let Some(sigma) = self.sigma {
            positive(sigma, "sigma")?;
        }
        positive(self.s, "s")?;
        positive(self.t, "t")?;
        positive(self.gap_tol, "gap_tol")?;
        positive(self.exact_tol, "exact_tol")?;
        if !(self.rho > 0.0 && self.rho < 2.0) {
            return Err(SolverError::Config(format!("rho must lie in (0, 2), got {}", self.rho)));
        }
        if self.pcg_iters == 0 {
            return Err(SolverError::Config("pcg_iters must be at least 1".into()));
        }
        if self.max_iters == 0 || self.gap_check_every == 0 {
            return Err(SolverError::Config("max_iters and gap_check_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Upper bound on `||K||^2` used for the default dual step.
pub fn norm_bound(formulation: Formulation) -> f64 {
    match formulation {
        Formulation::U | Formulation::V => 8.0,
        Formulation::UV => 12.0,
        // ||E||^2 <= 8 and ||(grad, -I)||^2 <= 9.
        Formulation::UW => 72.0,
    }
}

/// Why an iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The observer asked to stop.
    Observer,
}

/// One gap evaluation, handed to observers.
#[derive(Debug)]
pub struct Progress<'a> {
    pub iteration: usize,
    pub primal: &'a [f64],
    pub dual: &'a [f64],
    pub objective: f64,
    pub gap: f64,
    pub relative_gap: f64,
}

/// Observer verdict after a gap evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub wall_time: Duration,
    /// `(iteration, relative gap)` at every gap evaluation.
    pub gap_trace: Vec<(usize, f64)>,
    /// Douglas-Rachford fixed-point residual per iteration (empty for CP).
    pub residual_trace: Vec<f64>,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective: f64,
    pub relative_gap: f64,
    pub termination: Termination,
    /// Inexact resolvents whose PCG hit a non-positive curvature direction.
    pub pcg_breakdowns: usize,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Runs the configured algorithm.
pub fn solve(problem: &dyn SaddlePointProblem, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    match config.algorithm {
        Algorithm::ChambollePock => chambolle_pock(problem, config),
        Algorithm::DrExact | Algorithm::DrInexact => douglas_rachford(problem, config),
    }
}

/// [`solve`] with an observer called at every gap evaluation.
pub fn solve_observed(
    problem: &dyn SaddlePointProblem,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&Progress) -> Control,
) -> Result<SolveReport, SolverError> {
    match config.algorithm {
        Algorithm::ChambollePock => chambolle_pock_observed(problem, config, observer),
        Algorithm::DrExact | Algorithm::DrInexact => douglas_rachford_observed(problem, config, observer),
    }
}

/// Estimates `||K||^2` as the Rayleigh quotient of `K^T K` after `iters`
/// power iterations from a seeded random start.
pub fn power_iteration_norm(problem: &dyn SaddlePointProblem, iters: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..problem.primal_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut kx = vec![0.0; problem.dual_len()];
    let mut ktkx = vec![0.0; problem.primal_len()];
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        problem.apply_k(&x, &mut kx);
        estimate = dot(&kx, &kx);
        problem.apply_kt(&kx, &mut ktkx);
        std::mem::swap(&mut x, &mut ktkx);
    }
    estimate
}

/// Rejects Chambolle-Pock steps with `tau * sigma * ||K||^2 > 1`, using a
/// power-iteration estimate of the norm.
pub fn check_step_sizes(problem: &dyn SaddlePointProblem, tau: f64, sigma: f64) -> Result<(), SolverError> {
    let product = tau * sigma * power_iteration_norm(problem, 200, 0);
    if product > 1.0 + 1e-9 {
        Err(SolverError::StepSize { product })
    } else {
        Ok(())
    }
}

fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Evaluates the stopping gap and records it.
struct GapMonitor<'a> {
    problem: &'a dyn SaddlePointProblem,
    tol: f64,
    trace: Vec<(usize, f64)>,
    objective: f64,
    relative_gap: f64,
}

impl<'a> GapMonitor<'a> {
    fn new(problem: &'a dyn SaddlePointProblem, tol: f64) -> Self {
        Self {
            problem,
            tol,
            trace: Vec::new(),
            objective: f64::INFINITY,
            relative_gap: f64::INFINITY,
        }
    }

    /// Returns `Some(termination)` if the iteration should stop.
    fn check(
        &mut self,
        iteration: usize,
        x: &[f64],
        y: &[f64],
        observer: &mut dyn FnMut(&Progress) -> Control,
    ) -> Result<Option<Termination>, SolverError> {
        if !all_finite(x) || !all_finite(y) {
            return Err(SolverError::NonFinite { iteration });
        }
        let gap = self.problem.stopping_gap(x, y);
        self.objective = self.problem.primal_objective(x);
        self.relative_gap = crate::problems::relative_gap(gap, self.objective);
        self.trace.push((iteration, self.relative_gap));
        log::trace!("iter {iteration}: objective {:.6e}, relative gap {:.3e}", self.objective, self.relative_gap);
        let progress = Progress {
            iteration,
            primal: x,
            dual: y,
            objective: self.objective,
            gap,
            relative_gap: self.relative_gap,
        };
        if observer(&progress) == Control::Stop {
            return Ok(Some(Termination::Observer));
        }
        Ok((self.relative_gap <= self.tol).then_some(Termination::Converged))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField;
    use crate::problems::{Problem, ProblemSpec};

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            rho: 2.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            pcg_iters: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn power_iteration_is_deterministic_and_bounded() {
        let u0 = ScalarField::from_fn(12, 12, |i, j, _| ((i * j) % 3) as f64);
        let p = Problem::new(ProblemSpec::new(Variant::RofConstrained, u0).with_delta1(1.0)).unwrap();
        let a = power_iteration_norm(&p, 100, 7);
        let b = power_iteration_norm(&p, 100, 7);
        assert_eq!(a, b);
        assert!(a <= 8.0 && a > 6.0, "{a}");
    }

    #[test]
    fn step_size_check_rejects_large_steps() {
        let u0 = ScalarField::from_fn(8, 8, |i, _, _| i as f64 * 0.1);
        let p = Problem::new(ProblemSpec::new(Variant::Mtgv, u0).with_delta1(0.1).with_alpha(2.0)).unwrap();
        assert!(check_step_sizes(&p, 0.1, 1.0 / (0.1 * 12.0)).is_ok());
        assert!(matches!(check_step_sizes(&p, 0.1, 1.0), Err(SolverError::StepSize { .. })));
    }
}
