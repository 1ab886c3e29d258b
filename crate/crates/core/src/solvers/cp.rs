use std::time::Instant;

use crate::error::SolverError;
use crate::problems::SaddlePointProblem;

use super::{check_step_sizes, norm_bound, Control, GapMonitor, Progress, SolveReport, SolverConfig, Termination};

/// Chambolle-Pock with constant steps:
/// `y+ = prox_{sigma G*}(y + sigma K (2x - x-))`, `x+ = prox_{tau F}(x - tau K^T y+)`.
pub fn chambolle_pock(problem: &dyn SaddlePointProblem, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    chambolle_pock_observed(problem, config, &mut |_| Control::Continue)
}

pub fn chambolle_pock_observed(
    problem: &dyn SaddlePointProblem,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&Progress) -> Control,
) -> Result<SolveReport, SolverError> {
    config.validate()?;
    let tau = config.tau;
    let sigma = match config.sigma {
        Some(sigma) => {
            check_step_sizes(problem, tau, sigma)?;
            sigma
        }
        None => {
            let bound = match problem.structure() {
                Some((formulation, _, _)) => norm_bound(formulation),
                None => 1.01 * super::power_iteration_norm(problem, 200, 0),
            };
            1.0 / (tau * bound.max(f64::MIN_POSITIVE))
        }
    };
    let start = Instant::now();
    let mut x = problem.initial_primal();
    let mut x_bar = x.clone();
    let mut x_new = vec![0.0; x.len()];
    let mut y = vec![0.0; problem.dual_len()];
    let mut kx = vec![0.0; y.len()];
    let mut kty = vec![0.0; x.len()];
    let mut monitor = GapMonitor::new(problem, config.gap_tol);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for k in 1..=config.max_iters {
        problem.apply_k(&x_bar, &mut kx);
        y.iter_mut().zip(&kx).for_each(|(y, kx)| *y += sigma * kx);
        problem.prox_g_conj(&mut y, sigma);
        problem.apply_kt(&y, &mut kty);
        x_new.iter_mut().zip(x.iter().zip(&kty)).for_each(|(n, (x, g))| *n = x - tau * g);
        problem.prox_f(&mut x_new, tau);
        for ((b, x), n) in x_bar.iter_mut().zip(x.iter_mut()).zip(&x_new) {
            *b = 2.0 * n - *x;
            *x = *n;
        }
        iterations = k;
        if k % config.gap_check_every == 0 || k == config.max_iters {
            if let Some(stop) = monitor.check(k, &x, &y, observer)? {
                termination = stop;
                break;
            }
        }
    }

    Ok(SolveReport {
        algorithm: config.algorithm,
        iterations,
        wall_time: start.elapsed(),
        gap_trace: monitor.trace,
        residual_trace: Vec::new(),
        primal: x,
        dual: y,
        objective: monitor.objective,
        relative_gap: monitor.relative_gap,
        termination,
        pcg_breakdowns: 0,
    })
}
