use std::time::Instant;

use crate::error::SolverError;
use crate::problems::SaddlePointProblem;

use super::linear::NormalSystem;
use super::{Algorithm, Control, GapMonitor, PreconditionerKind, Progress, SolveReport, SolverConfig, Termination};

/// Relaxed Douglas-Rachford on the saddle-point inclusion.
///
/// The splitting puts the prox maps (`prox_{tF}`, `prox_{sG*}`) in one
/// resolvent and the skew operator `(x, y) -> (K^T y, -K x)` in the other.
/// The skew resolvent is evaluated with one solve of
/// `(I + st K^T K) x' = rx - t K^T ry` followed by `y' = ry + s K x'`.
/// Gaps are measured at the prox outputs.
pub fn douglas_rachford(problem: &dyn SaddlePointProblem, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    douglas_rachford_observed(problem, config, &mut |_| Control::Continue)
}

pub fn douglas_rachford_observed(
    problem: &dyn SaddlePointProblem,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&Progress) -> Control,
) -> Result<SolveReport, SolverError> {
    config.validate()?;
    let (s, t, rho) = (config.s, config.t, config.rho);
    let exact = match config.algorithm {
        Algorithm::DrExact => true,
        Algorithm::DrInexact => false,
        Algorithm::ChambollePock => {
            return Err(SolverError::Config("douglas_rachford called with the CP algorithm".into()))
        }
    };
    let precond = if exact {
        PreconditionerKind::IcholBlock
    } else {
        config.preconditioner
    };
    let start = Instant::now();
    let system = NormalSystem::new(problem, s * t, precond, config.uw_scaling)?;

    let mut zx = problem.initial_primal();
    let mut zy = vec![0.0; problem.dual_len()];
    let mut bx = zx.clone();
    let mut by = zy.clone();
    let mut x_lin = zx.clone();
    let mut rhs = vec![0.0; zx.len()];
    let mut ry = vec![0.0; zy.len()];
    let mut kx = vec![0.0; zy.len()];
    let mut monitor = GapMonitor::new(problem, config.gap_tol);
    let mut residual_trace = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut breakdowns = 0;
    let mut iterations = 0;

    for k in 0..=config.max_iters {
        bx.copy_from_slice(&zx);
        problem.prox_f(&mut bx, t);
        by.copy_from_slice(&zy);
        problem.prox_g_conj(&mut by, s);
        if k > 0 && (k % config.gap_check_every == 0 || k == config.max_iters) {
            if let Some(stop) = monitor.check(k, &bx, &by, observer)? {
                termination = stop;
                break;
            }
        }
        if k == config.max_iters {
            break;
        }

        ry.iter_mut().zip(by.iter().zip(&zy)).for_each(|(r, (b, z))| *r = 2.0 * b - z);
        problem.apply_kt(&ry, &mut rhs);
        rhs.iter_mut()
            .zip(bx.iter().zip(&zx))
            .for_each(|(r, (b, z))| *r = 2.0 * b - z - t * *r);
        if exact {
            system.solve_exact(&rhs, &mut x_lin, config.exact_tol)?;
        } else {
            let out = system.solve_steps(&rhs, &mut x_lin, config.pcg_iters);
            if out.breakdown {
                breakdowns += 1;
                log::warn!("iteration {k}: PCG breakdown after {} steps", out.iterations);
            }
        }
        problem.apply_k(&x_lin, &mut kx);

        let mut dx2 = 0.0;
        for ((z, x), b) in zx.iter_mut().zip(&x_lin).zip(&bx) {
            let d = rho * (x - b);
            *z += d;
            dx2 += d * d;
        }
        let mut dy2 = 0.0;
        for (((z, r), kx), b) in zy.iter_mut().zip(&ry).zip(&kx).zip(&by) {
            let d = rho * (r + s * kx - b);
            *z += d;
            dy2 += d * d;
        }
        residual_trace.push((dx2 + (t / s) * dy2).sqrt());
        iterations = k + 1;
    }

    Ok(SolveReport {
        algorithm: config.algorithm,
        iterations,
        wall_time: start.elapsed(),
        gap_trace: monitor.trace,
        residual_trace,
        primal: bx,
        dual: by,
        objective: monitor.objective,
        relative_gap: monitor.relative_gap,
        termination,
        pcg_breakdowns: breakdowns,
    })
}
