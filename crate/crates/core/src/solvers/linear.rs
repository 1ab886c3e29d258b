//! Linear solves with `A = I + st K^T K` for the Douglas-Rachford resolvent.

use crate::error::SolverError;
use crate::grid::{dot, norm2};
use crate::problems::SaddlePointProblem;
use crate::sparse::{
    BlockPreconditioner, DifferenceMatrices, IdentityPreconditioner, LinearOperator, Preconditioner,
    SparseOperator, UwScaling,
};

use super::PreconditionerKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOutcome {
    pub iterations: usize,
    /// `||b - A x|| / ||b||` at exit (absolute residual if `b = 0`).
    pub relative_residual: f64,
    /// A search direction had non-positive or non-finite curvature; `x`
    /// holds the last valid iterate.
    pub breakdown: bool,
}

/// Preconditioned conjugate gradients on `A x = b` starting from `x`.
///
/// Runs at most `max_iters` iterations and stops early once the relative
/// residual drops to `rel_tol` (pass `0.0` to run exactly `max_iters`).
pub fn pcg(
    a: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Preconditioner,
    max_iters: usize,
    rel_tol: f64,
) -> PcgOutcome {
    let n = b.len();
    let b_norm = norm2(b);
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let mut res = norm2(&r) / scale;
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while iterations < max_iters && res > rel_tol && res > 0.0 {
        a.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0 && curvature.is_finite() && rz.is_finite()) {
            return PcgOutcome {
                iterations,
                relative_residual: res,
                breakdown: true,
            };
        }
        let step = rz / curvature;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += step * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= step * ap);
        iterations += 1;
        res = norm2(&r) / scale;
        precond.apply(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    PcgOutcome {
        iterations,
        relative_residual: res,
        breakdown: false,
    }
}

/// `x -> x + st K^T K x` evaluated through the problem's own operators.
pub struct NormalOperator<'a> {
    problem: &'a dyn SaddlePointProblem,
    st: f64,
}

impl<'a> NormalOperator<'a> {
    pub fn new(problem: &'a dyn SaddlePointProblem, st: f64) -> Self {
        Self { problem, st }
    }
}

impl LinearOperator for NormalOperator<'_> {
    fn dim(&self) -> usize {
        self.problem.primal_len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut kx = vec![0.0; self.problem.dual_len()];
        self.problem.apply_k(x, &mut kx);
        self.problem.apply_kt(&kx, y);
        y.iter_mut().zip(x).for_each(|(y, x)| *y = x + self.st * *y);
    }
}

/// How the resolvent's linear system is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearMode {
    /// Preconditioned CG to the given relative residual.
    Exact { tol: f64 },
    /// Exactly `iters` PCG steps from the warm start.
    Pcg { iters: usize, preconditioner: PreconditionerKind },
}

/// Linear system of one Douglas-Rachford run, assembled once.
pub(crate) struct NormalSystem<'a> {
    matrix: Option<SparseOperator>,
    matrix_free: NormalOperator<'a>,
    precond: Option<BlockPreconditioner>,
}

impl<'a> NormalSystem<'a> {
    pub(crate) fn new(
        problem: &'a dyn SaddlePointProblem,
        st: f64,
        precond: PreconditionerKind,
        uw: UwScaling,
    ) -> Result<Self, SolverError> {
        let structure = problem.structure();
        let matrix = match structure {
            Some((formulation, m, n)) => Some(DifferenceMatrices::new(m, n)?.ktk(formulation, st)),
            None => None,
        };
        let precond = match (structure, precond) {
            (Some((formulation, m, n)), PreconditionerKind::IcholBlock) => {
                Some(BlockPreconditioner::for_formulation(formulation, m, n, st, uw)?)
            }
            _ => None,
        };
        Ok(Self {
            matrix,
            matrix_free: NormalOperator::new(problem, st),
            precond,
        })
    }

    fn operator(&self) -> &dyn LinearOperator {
        match &self.matrix {
            Some(m) => m,
            None => &self.matrix_free,
        }
    }

    fn preconditioner(&self) -> &dyn Preconditioner {
        match &self.precond {
            Some(p) => p,
            None => &IdentityPreconditioner,
        }
    }

    /// Solves to `tol`; failure to converge is an error.
    pub(crate) fn solve_exact(&self, rhs: &[f64], x: &mut [f64], tol: f64) -> Result<PcgOutcome, SolverError> {
        let cap = 10 * rhs.len().max(100);
        let out = pcg(self.operator(), rhs, x, self.preconditioner(), cap, tol);
        if out.relative_residual > tol {
            return Err(SolverError::LinearSolve {
                residual: out.relative_residual,
                iterations: out.iterations,
            });
        }
        Ok(out)
    }

    pub(crate) fn solve_steps(&self, rhs: &[f64], x: &mut [f64], iters: usize) -> PcgOutcome {
        pcg(self.operator(), rhs, x, self.preconditioner(), iters, 0.0)
    }
}

/// Solves `(I + st K^T K) x = rhs` from `warm_start`.
pub fn resolvent_linear(
    problem: &dyn SaddlePointProblem,
    rhs: &[f64],
    s: f64,
    t: f64,
    mode: LinearMode,
    warm_start: &[f64],
) -> Result<(Vec<f64>, PcgOutcome), SolverError> {
    let mut x = warm_start.to_vec();
    match mode {
        LinearMode::Exact { tol } => {
            let system = NormalSystem::new(problem, s * t, PreconditionerKind::IcholBlock, UwScaling::Literal)?;
            let out = system.solve_exact(rhs, &mut x, tol)?;
            Ok((x, out))
        }
        LinearMode::Pcg { iters, preconditioner } => {
            let system = NormalSystem::new(problem, s * t, preconditioner, UwScaling::Literal)?;
            let out = system.solve_steps(rhs, &mut x, iters);
            if out.breakdown {
                log::warn!("PCG breakdown after {} iterations", out.iterations);
            }
            Ok((x, out))
        }
    }
}
