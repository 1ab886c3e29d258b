//! Saddle-point formulations `min_x F(x) + G(Kx)` of the denoising models,
//! with their prox maps, primal objectives and duality gaps.
//!
//! Iterates are flat channel-major vectors. Primal blocks are stacked `u`
//! first, then `v`/`w`; dual blocks `p` first, then `q`.
//!
//! | variant        | primal   | dual     | `K`              |
//! |----------------|----------|----------|------------------|
//! | RofConstrained | `u`      | `p`      | `grad`           |
//! | Dgtv2          | `u`      | `p`      | `grad`           |
//! | Dgtv1          | `v`      | `q`      | `E`              |
//! | Dgtgv1         | `w`      | `q`      | `E`              |
//! | Tgv, Mtgv      | `(u, v)` | `(p, q)` | `[[grad, -I], [0, E]]` |
//! | MtgvW, Ctgv    | `(u, w)` | `q`      | `E (grad, -I)`   |

use std::fmt;

use crate::error::ProblemError;
use crate::grid::{
    self, dot, grad_into, grad_t_add, mixed_l1_slice, mixed_linf_slice, norm2, symgrad_into,
    symgrad_t_add, ScalarField, TensorField, VectorField,
};
use crate::prox::{
    project_l1_l2_slice, project_l2_ball_slice, project_linf_l2_slice, soft_threshold_slice,
};
use crate::sparse::Formulation;

/// Relative slack on norm constraints when evaluating indicator functions.
pub const INDICATOR_REL_TOL: f64 = 1e-6;
/// Absolute slack on norm constraints when evaluating indicator functions.
pub const INDICATOR_ABS_TOL: f64 = 1e-12;
/// Slack on the dual feasibility precondition of the modified gaps.
pub const DUAL_PRECONDITION_TOL: f64 = 1e-9;

/// Is `value <= bound` up to the indicator tolerance?
pub fn within_bound(value: f64, bound: f64) -> bool {
    value <= bound * (1.0 + INDICATOR_REL_TOL) + INDICATOR_ABS_TOL
}

/// `gap / (1 + |objective|)`, the quantity compared against `gap_tol`.
pub fn relative_gap(gap: f64, objective: f64) -> f64 {
    gap / (1.0 + objective.abs())
}

/// The denoising models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `min |||grad u|||_1` s.t. `||u - u0|| <= delta1`.
    RofConstrained,
    /// Gradient denoising, constrained: `min |||E v|||_1` s.t. `|||grad u0 - v|||_1 <= delta2`.
    Dgtv1,
    /// Image fit to a gradient estimate: `min |||grad u - v_hat|||_1` s.t. `||u - u0|| <= delta1`.
    Dgtv2,
    /// Gradient denoising, penalized: `min |||grad u0 - v|||_1 + alpha |||E v|||_1`, solved in `w = grad u0 - v`.
    Dgtgv1,
    /// `min 1/2 ||u - u0||^2 + alpha1 |||grad u - v|||_1 + alpha0 |||E v|||_1`.
    Tgv,
    /// `min |||grad u - v|||_1 + alpha |||E v|||_1` s.t. `||u - u0|| <= delta1`.
    Mtgv,
    /// [`Variant::Mtgv`] in the variables `(u, w = grad u - v)`.
    MtgvW,
    /// `min |||E(grad u - w)|||_1` s.t. `||u - u0|| <= delta1`, `|||w|||_1 <= delta2`.
    Ctgv,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::RofConstrained,
        Variant::Dgtv1,
        Variant::Dgtv2,
        Variant::Dgtgv1,
        Variant::Tgv,
        Variant::Mtgv,
        Variant::MtgvW,
        Variant::Ctgv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::RofConstrained => "rof",
            Variant::Dgtv1 => "dgtv1",
            Variant::Dgtv2 => "dgtv2",
            Variant::Dgtgv1 => "dgtgv1",
            Variant::Tgv => "tgv",
            Variant::Mtgv => "mtgv",
            Variant::MtgvW => "mtgv-w",
            Variant::Ctgv => "ctgv",
        }
    }

    pub fn formulation(self) -> Formulation {
        match self {
            Variant::RofConstrained | Variant::Dgtv2 => Formulation::U,
            Variant::Dgtv1 | Variant::Dgtgv1 => Formulation::V,
            Variant::Tgv | Variant::Mtgv => Formulation::UV,
            Variant::MtgvW | Variant::Ctgv => Formulation::UW,
        }
    }

    /// Number of primal and dual scalars per pixel.
    fn block_sizes(self) -> (usize, usize) {
        match self {
            Variant::RofConstrained | Variant::Dgtv2 => (1, 2),
            Variant::Dgtv1 | Variant::Dgtgv1 => (2, 4),
            Variant::Tgv | Variant::Mtgv => (3, 6),
            Variant::MtgvW | Variant::Ctgv => (3, 4),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model variant plus data and parameters.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub variant: Variant,
    pub u0: ScalarField,
    /// Gradient estimate for [`Variant::Dgtv2`] (zero if absent for [`Variant::RofConstrained`]).
    pub v_hat: Option<VectorField>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    /// Constant in `delta2 = c |||grad u0|||_1`; informational once `delta2` is set.
    pub c: Option<f64>,
}

impl ProblemSpec {
    pub fn new(variant: Variant, u0: ScalarField) -> Self {
        Self {
            variant,
            u0,
            v_hat: None,
            delta1: None,
            delta2: None,
            alpha: None,
            alpha0: None,
            alpha1: None,
            c: None,
        }
    }

    pub fn with_v_hat(mut self, v_hat: VectorField) -> Self {
        self.v_hat = Some(v_hat);
        self
    }

    pub fn with_delta1(mut self, delta1: f64) -> Self {
        self.delta1 = Some(delta1);
        self
    }

    pub fn with_delta2(mut self, delta2: f64) -> Self {
        self.delta2 = Some(delta2);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_tgv_weights(mut self, alpha0: f64, alpha1: f64) -> Self {
        self.alpha0 = Some(alpha0);
        self.alpha1 = Some(alpha1);
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }

    /// Checks that every parameter the variant needs is present and in range.
    pub fn validate(&self) -> Result<(), ProblemError> {
        use Variant::*;
        let variant = self.variant.name();
        let need = |value: Option<f64>, name: &'static str| {
            value.ok_or(ProblemError::MissingParameter { variant, name })
        };
        let non_negative = |value: f64, name: &'static str| {
            if value.is_finite() && value >= 0.0 {
                Ok(())
            } else {
                Err(ProblemError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and >= 0",
                })
            }
        };
        let positive = |value: f64, name: &'static str| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(ProblemError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and > 0",
                })
            }
        };
        if !self.u0.is_finite() {
            return Err(ProblemError::InvalidParameter {
                name: "u0",
                value: f64::NAN,
                reason: "image contains non-finite values",
            });
        }
        if matches!(self.variant, RofConstrained | Dgtv2 | Mtgv | MtgvW | Ctgv) {
            non_negative(need(self.delta1, "delta1")?, "delta1")?;
        }
        if matches!(self.variant, Dgtv1 | Ctgv) {
            non_negative(need(self.delta2, "delta2")?, "delta2")?;
        }
        if matches!(self.variant, Dgtgv1 | Mtgv | MtgvW) {
            positive(need(self.alpha, "alpha")?, "alpha")?;
        }
        if self.variant == Tgv {
            positive(need(self.alpha0, "alpha0")?, "alpha0")?;
            positive(need(self.alpha1, "alpha1")?, "alpha1")?;
        }
        if let Some(c) = self.c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(ProblemError::InvalidParameter {
                    name: "c",
                    value: c,
                    reason: "must be > 0",
                });
            }
        }
        if self.variant == Dgtv2 {
            let v_hat = self.v_hat.as_ref().ok_or(ProblemError::MissingParameter {
                variant,
                name: "v_hat",
            })?;
            if !v_hat.same_shape(&self.u0) {
                return Err(crate::error::GridError::Shape("v_hat does not match u0".into()).into());
            }
        }
        Ok(())
    }
}

/// Structured view of a primal iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalState {
    pub u: Option<ScalarField>,
    pub v: Option<VectorField>,
    pub w: Option<VectorField>,
}

/// Structured view of a dual iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub p: Option<VectorField>,
    pub q: Option<TensorField>,
}

/// `(u, v) -> (u, w = grad u - v)`.
pub fn to_w_variables(u: &ScalarField, v: &VectorField) -> VectorField {
    grid::grad(u).add_scaled(-1.0, v)
}

/// `(u, w) -> (u, v = grad u - w)`.
pub fn from_w_variables(u: &ScalarField, w: &VectorField) -> VectorField {
    grid::grad(u).add_scaled(-1.0, w)
}

/// Abstract saddle-point problem `min_x max_y <Kx, y> + F(x) - G*(y)`.
pub trait SaddlePointProblem {
    fn primal_len(&self) -> usize;
    fn dual_len(&self) -> usize;
    /// `out = K x`.
    fn apply_k(&self, x: &[f64], out: &mut [f64]);
    /// `out = K^T y`.
    fn apply_kt(&self, y: &[f64], out: &mut [f64]);
    /// In place `x <- prox_{tau F}(x)`.
    fn prox_f(&self, x: &mut [f64], tau: f64);
    /// In place `y <- prox_{sigma G*}(y)`.
    fn prox_g_conj(&self, y: &mut [f64], sigma: f64);
    fn primal_objective(&self, x: &[f64]) -> f64;
    /// Finite upper bound on `objective(x) - min objective`, used for stopping.
    fn stopping_gap(&self, x: &[f64], y: &[f64]) -> f64;
    fn initial_primal(&self) -> Vec<f64> {
        vec![0.0; self.primal_len()]
    }
    /// Grid shape and block structure, if `K` is one of the assembled operators.
    fn structure(&self) -> Option<(Formulation, usize, usize)> {
        None
    }
}

/// A validated [`ProblemSpec`] with cached data terms.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    rows: usize,
    cols: usize,
    grad_u0: VectorField,
    /// `E grad u0`, only for [`Variant::Dgtgv1`].
    hess_u0: Option<TensorField>,
    v_hat: Option<VectorField>,
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Self, ProblemError> {
        spec.validate()?;
        let (rows, cols) = spec.u0.shape();
        let grad_u0 = grid::grad(&spec.u0);
        let hess_u0 = (spec.variant == Variant::Dgtgv1).then(|| grid::symgrad(&grad_u0));
        let v_hat = match spec.variant {
            Variant::Dgtv2 => spec.v_hat.clone(),
            Variant::RofConstrained => spec.v_hat.clone().filter(|v| v.same_shape(&spec.u0)),
            _ => None,
        };
        Ok(Self {
            spec,
            rows,
            cols,
            grad_u0,
            hess_u0,
            v_hat,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn px(&self) -> usize {
        self.rows * self.cols
    }

    fn u0(&self) -> &[f64] {
        self.spec.u0.as_slice()
    }

    fn delta1(&self) -> f64 {
        self.spec.delta1.unwrap_or(0.0)
    }

    fn delta2(&self) -> f64 {
        self.spec.delta2.unwrap_or(0.0)
    }

    fn alpha(&self) -> f64 {
        self.spec.alpha.unwrap_or(1.0)
    }

    fn alpha0(&self) -> f64 {
        self.spec.alpha0.unwrap_or(1.0)
    }

    fn alpha1(&self) -> f64 {
        self.spec.alpha1.unwrap_or(1.0)
    }

    /// Bounds `(|p|, |q|)` on the dual blocks imposed by `G*`.
    fn dual_bounds(&self) -> (f64, f64) {
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => (1.0, 0.0),
            Variant::Dgtv1 | Variant::Ctgv => (0.0, 1.0),
            Variant::Dgtgv1 | Variant::MtgvW | Variant::Mtgv => (1.0, self.alpha()),
            Variant::Tgv => (self.alpha1(), self.alpha0()),
        }
    }

    fn check_len(&self, x: &[f64], y: &[f64]) -> Result<(), ProblemError> {
        if x.len() != self.primal_len() {
            return Err(ProblemError::StateLength {
                expected: self.primal_len(),
                actual: x.len(),
            });
        }
        if y.len() != self.dual_len() {
            return Err(ProblemError::StateLength {
                expected: self.dual_len(),
                actual: y.len(),
            });
        }
        Ok(())
    }

    // -- small helpers ------------------------------------------------------

    fn grad(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.px()];
        grad_into(u, &mut out, self.rows, self.cols);
        out
    }

    /// `grad^T p = -div p`.
    fn grad_t(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.px()];
        grad_t_add(p, &mut out, self.rows, self.cols, 1.0);
        out
    }

    fn symgrad(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 4 * self.px()];
        let mut scratch = vec![0.0; self.px()];
        symgrad_into(v, &mut out, self.rows, self.cols, &mut scratch);
        out
    }

    fn symgrad_t(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.px()];
        let mut scratch = vec![0.0; self.px()];
        symgrad_t_add(q, &mut out, self.rows, self.cols, 1.0, &mut scratch);
        out
    }

    /// `grad u - w` for the `(u, w)` and `(u, v)` layouts.
    fn grad_minus(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        let mut g = self.grad(u);
        g.iter_mut().zip(w).for_each(|(g, w)| *g -= w);
        g
    }

    fn indicator_ball(&self, u: &[f64]) -> f64 {
        let dist = u
            .iter()
            .zip(self.u0())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if within_bound(dist, self.delta1()) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn indicator_linf(data: &[f64], channels: usize, bound: f64) -> f64 {
        if within_bound(mixed_linf_slice(data, channels), bound) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn v_hat_slice(&self) -> Option<&[f64]> {
        self.v_hat.as_ref().map(|v| v.as_slice())
    }

    // -- structured views ---------------------------------------------------

    /// Splits a flat primal vector into its named blocks.
    pub fn primal_state(&self, x: &[f64]) -> PrimalState {
        let (m, n, px) = (self.rows, self.cols, self.px());
        let scalar = |s: &[f64]| ScalarField::from_vec(m, n, s.to_vec()).expect("shape");
        let vector = |s: &[f64]| VectorField::from_vec(m, n, s.to_vec()).expect("shape");
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => PrimalState {
                u: Some(scalar(x)),
                v: None,
                w: None,
            },
            Variant::Dgtv1 => PrimalState {
                u: None,
                v: Some(vector(x)),
                w: None,
            },
            Variant::Dgtgv1 => PrimalState {
                u: None,
                v: None,
                w: Some(vector(x)),
            },
            Variant::Tgv | Variant::Mtgv => PrimalState {
                u: Some(scalar(&x[..px])),
                v: Some(vector(&x[px..])),
                w: None,
            },
            Variant::MtgvW | Variant::Ctgv => PrimalState {
                u: Some(scalar(&x[..px])),
                v: None,
                w: Some(vector(&x[px..])),
            },
        }
    }

    /// Flattens a structured primal state; missing blocks are an error.
    pub fn primal_vec(&self, state: &PrimalState) -> Result<Vec<f64>, ProblemError> {
        let variant = self.variant().name();
        let missing = |name| ProblemError::MissingParameter { variant, name };
        let mut out = Vec::with_capacity(self.primal_len());
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => {
                out.extend_from_slice(state.u.as_ref().ok_or(missing("u"))?.as_slice())
            }
            Variant::Dgtv1 => out.extend_from_slice(state.v.as_ref().ok_or(missing("v"))?.as_slice()),
            Variant::Dgtgv1 => out.extend_from_slice(state.w.as_ref().ok_or(missing("w"))?.as_slice()),
            Variant::Tgv | Variant::Mtgv => {
                out.extend_from_slice(state.u.as_ref().ok_or(missing("u"))?.as_slice());
                out.extend_from_slice(state.v.as_ref().ok_or(missing("v"))?.as_slice());
            }
            Variant::MtgvW | Variant::Ctgv => {
                out.extend_from_slice(state.u.as_ref().ok_or(missing("u"))?.as_slice());
                out.extend_from_slice(state.w.as_ref().ok_or(missing("w"))?.as_slice());
            }
        }
        if out.len() != self.primal_len() {
            return Err(ProblemError::StateLength {
                expected: self.primal_len(),
                actual: out.len(),
            });
        }
        Ok(out)
    }

    pub fn dual_state(&self, y: &[f64]) -> DualState {
        let (m, n, px) = (self.rows, self.cols, self.px());
        let vector = |s: &[f64]| VectorField::from_vec(m, n, s.to_vec()).expect("shape");
        let tensor = |s: &[f64]| TensorField::from_vec(m, n, s.to_vec()).expect("shape");
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => DualState {
                p: Some(vector(y)),
                q: None,
            },
            Variant::Tgv | Variant::Mtgv => DualState {
                p: Some(vector(&y[..2 * px])),
                q: Some(tensor(&y[2 * px..])),
            },
            _ => DualState {
                p: None,
                q: Some(tensor(y)),
            },
        }
    }

    pub fn dual_vec(&self, state: &DualState) -> Result<Vec<f64>, ProblemError> {
        let variant = self.variant().name();
        let missing = |name| ProblemError::MissingParameter { variant, name };
        let mut out = Vec::with_capacity(self.dual_len());
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => {
                out.extend_from_slice(state.p.as_ref().ok_or(missing("p"))?.as_slice())
            }
            Variant::Tgv | Variant::Mtgv => {
                out.extend_from_slice(state.p.as_ref().ok_or(missing("p"))?.as_slice());
                out.extend_from_slice(state.q.as_ref().ok_or(missing("q"))?.as_slice());
            }
            _ => out.extend_from_slice(state.q.as_ref().ok_or(missing("q"))?.as_slice()),
        }
        if out.len() != self.dual_len() {
            return Err(ProblemError::StateLength {
                expected: self.dual_len(),
                actual: out.len(),
            });
        }
        Ok(out)
    }

    /// The denoised image carried by a primal vector, if the variant has one.
    pub fn image(&self, x: &[f64]) -> Option<ScalarField> {
        self.primal_state(x).u
    }

    /// The gradient estimate carried by a gradient-denoising primal vector
    /// (`v` for [`Variant::Dgtv1`], `grad u0 - w` for [`Variant::Dgtgv1`]).
    pub fn gradient_estimate(&self, x: &[f64]) -> Option<VectorField> {
        match self.variant() {
            Variant::Dgtv1 => self.primal_state(x).v,
            Variant::Dgtgv1 => {
                let w = VectorField::from_vec(self.rows, self.cols, x.to_vec()).ok()?;
                Some(self.grad_u0.add_scaled(-1.0, &w))
            }
            _ => None,
        }
    }

    // -- gaps ---------------------------------------------------------------

    /// The literal duality gap `F(x) + G(Kx) + F*(-K^T y) + G*(y)`; `+inf`
    /// whenever an indicator is violated beyond tolerance.
    pub fn gap(&self, x: &[f64], y: &[f64]) -> Result<f64, ProblemError> {
        self.check_len(x, y)?;
        let px = self.px();
        let primal = self.primal_objective(x);
        let (p_bound, q_bound) = self.dual_bounds();
        let dual_part = match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => {
                let gtp = self.grad_t(y);
                let vhat_p = self.v_hat_slice().map_or(0.0, |v| dot(v, y));
                self.delta1() * norm2(&gtp) - dot(self.u0(), &gtp)
                    + vhat_p
                    + Self::indicator_linf(y, 2, p_bound)
            }
            Variant::Dgtv1 => {
                let etq = self.symgrad_t(y);
                self.delta2() * mixed_linf_slice(&etq, 2) - dot(&etq, self.grad_u0.as_slice())
                    + Self::indicator_linf(y, 4, q_bound)
            }
            Variant::Dgtgv1 => {
                let etq = self.symgrad_t(y);
                Self::indicator_linf(&etq, 2, 1.0)
                    + Self::indicator_linf(y, 4, q_bound)
                    + dot(self.hess_u0.as_ref().expect("cached").as_slice(), y)
            }
            Variant::Tgv | Variant::Mtgv => {
                let (p, q) = y.split_at(2 * px);
                let etq = self.symgrad_t(q);
                let scale = 1.0 + mixed_linf_slice(p, 2).max(mixed_linf_slice(&etq, 2));
                let mismatch = p
                    .iter()
                    .zip(&etq)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let consistency = if mismatch <= 1e-9 * scale { 0.0 } else { f64::INFINITY };
                let gtp = self.grad_t(p);
                let conj = if self.variant() == Variant::Tgv {
                    0.5 * dot(&gtp, &gtp)
                } else {
                    self.delta1() * norm2(&gtp)
                };
                conj - dot(p, self.grad_u0.as_slice())
                    + consistency
                    + Self::indicator_linf(p, 2, p_bound)
                    + Self::indicator_linf(q, 4, q_bound)
            }
            Variant::MtgvW => {
                let etq = self.symgrad_t(y);
                let gtp = self.grad_t(&etq);
                self.delta1() * norm2(&gtp) - dot(&etq, self.grad_u0.as_slice())
                    + Self::indicator_linf(&etq, 2, 1.0)
                    + Self::indicator_linf(y, 4, q_bound)
            }
            Variant::Ctgv => {
                let etq = self.symgrad_t(y);
                let gtp = self.grad_t(&etq);
                self.delta1() * norm2(&gtp) - dot(&gtp, self.u0())
                    + self.delta2() * mixed_linf_slice(&etq, 2)
                    + Self::indicator_linf(y, 4, q_bound)
            }
        };
        Ok(primal + dual_part)
    }

    /// Finite gap built from the tensor dual alone: `q` is rescaled to
    /// `q~ = q / max(1, |||E^T q|||_inf / b)` so that `p~ = E^T q~` satisfies
    /// the bound `b` on the first dual block, then the gap is evaluated at
    /// `(p~, q~)`. Variants without a `p = E^T q` coupling return the
    /// literal gap.
    pub fn gap_modified(&self, x: &[f64], y: &[f64]) -> Result<f64, ProblemError> {
        self.check_len(x, y)?;
        let px = self.px();
        let (p_bound, q_bound) = self.dual_bounds();
        let q = match self.variant() {
            Variant::Tgv | Variant::Mtgv => &y[2 * px..],
            Variant::Dgtgv1 | Variant::MtgvW => y,
            _ => return self.gap(x, y),
        };
        let q_norm = mixed_linf_slice(q, 4);
        if q_norm > q_bound * (1.0 + DUAL_PRECONDITION_TOL) + DUAL_PRECONDITION_TOL {
            return Err(ProblemError::InfeasibleDual {
                norm: q_norm,
                bound: q_bound,
            });
        }
        let mut etq = self.symgrad_t(q);
        let scale = (mixed_linf_slice(&etq, 2) / p_bound).max(1.0);
        etq.iter_mut().for_each(|e| *e /= scale);
        let q_tilde: Vec<f64> = q.iter().map(|v| v / scale).collect();
        let p_tilde = etq;

        let primal = self.primal_objective(x);
        let dual_part = match self.variant() {
            Variant::Dgtgv1 => dot(self.hess_u0.as_ref().expect("cached").as_slice(), &q_tilde),
            Variant::Tgv => {
                let gtp = self.grad_t(&p_tilde);
                0.5 * dot(&gtp, &gtp) - dot(&p_tilde, self.grad_u0.as_slice())
            }
            _ => {
                let gtp = self.grad_t(&p_tilde);
                self.delta1() * norm2(&gtp) - dot(&p_tilde, self.grad_u0.as_slice())
            }
        };
        Ok(primal + dual_part)
    }

    /// [`Problem::gap_modified`] for an explicitly given tensor dual `q`.
    pub fn gap_modified_q(&self, x: &[f64], q: &TensorField) -> Result<f64, ProblemError> {
        let y = match self.variant() {
            Variant::Tgv | Variant::Mtgv => {
                let mut y = vec![0.0; 2 * self.px()];
                y.extend_from_slice(q.as_slice());
                y
            }
            Variant::Dgtgv1 | Variant::MtgvW | Variant::Dgtv1 | Variant::Ctgv => q.as_slice().to_vec(),
            Variant::RofConstrained | Variant::Dgtv2 => {
                return Err(ProblemError::MissingParameter {
                    variant: self.variant().name(),
                    name: "p (this variant has no tensor dual)",
                })
            }
        };
        self.gap_modified(x, &y)
    }

    /// Starting point: `u = u0` and zero auxiliary fields. The constrained
    /// gradient stage starts at `v = 0`, a fixed point whenever the budget
    /// admits it (`delta2 >= |||grad u0|||_1`); the penalized one starts at
    /// `w = 0`, i.e. `v = grad u0`.
    fn start(&self) -> Vec<f64> {
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => self.u0().to_vec(),
            Variant::Dgtv1 | Variant::Dgtgv1 => vec![0.0; 2 * self.px()],
            _ => {
                let mut x = self.u0().to_vec();
                x.resize(3 * self.px(), 0.0);
                x
            }
        }
    }
}

impl SaddlePointProblem for Problem {
    fn primal_len(&self) -> usize {
        self.variant().block_sizes().0 * self.px()
    }

    fn dual_len(&self) -> usize {
        self.variant().block_sizes().1 * self.px()
    }

    fn apply_k(&self, x: &[f64], out: &mut [f64]) {
        let (m, n, px) = (self.rows, self.cols, self.px());
        let mut scratch = vec![0.0; px];
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => grad_into(x, out, m, n),
            Variant::Dgtv1 | Variant::Dgtgv1 => symgrad_into(x, out, m, n, &mut scratch),
            Variant::Tgv | Variant::Mtgv => {
                let (u, v) = x.split_at(px);
                let (first, second) = out.split_at_mut(2 * px);
                grad_into(u, first, m, n);
                first.iter_mut().zip(v).for_each(|(a, b)| *a -= b);
                symgrad_into(v, second, m, n, &mut scratch);
            }
            Variant::MtgvW | Variant::Ctgv => {
                let (u, w) = x.split_at(px);
                let g = self.grad_minus(u, w);
                symgrad_into(&g, out, m, n, &mut scratch);
            }
        }
    }

    fn apply_kt(&self, y: &[f64], out: &mut [f64]) {
        let (m, n, px) = (self.rows, self.cols, self.px());
        let mut scratch = vec![0.0; px];
        out.fill(0.0);
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => grad_t_add(y, out, m, n, 1.0),
            Variant::Dgtv1 | Variant::Dgtgv1 => symgrad_t_add(y, out, m, n, 1.0, &mut scratch),
            Variant::Tgv | Variant::Mtgv => {
                let (p, q) = y.split_at(2 * px);
                let (ou, ov) = out.split_at_mut(px);
                grad_t_add(p, ou, m, n, 1.0);
                ov.iter_mut().zip(p).for_each(|(a, b)| *a = -b);
                symgrad_t_add(q, ov, m, n, 1.0, &mut scratch);
            }
            Variant::MtgvW | Variant::Ctgv => {
                let etq = self.symgrad_t(y);
                let (ou, ow) = out.split_at_mut(px);
                grad_t_add(&etq, ou, m, n, 1.0);
                ow.iter_mut().zip(&etq).for_each(|(a, b)| *a = -b);
            }
        }
    }

    fn prox_f(&self, x: &mut [f64], tau: f64) {
        let px = self.px();
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => {
                project_l2_ball_slice(x, Some(self.u0()), self.delta1())
            }
            Variant::Dgtv1 => project_l1_l2_slice(x, Some(self.grad_u0.as_slice()), 2, self.delta2()),
            Variant::Dgtgv1 => soft_threshold_slice(x, 2, tau),
            Variant::Tgv => {
                for (u, u0) in x[..px].iter_mut().zip(self.u0()) {
                    *u = (*u + tau * u0) / (1.0 + tau);
                }
            }
            Variant::Mtgv => project_l2_ball_slice(&mut x[..px], Some(self.u0()), self.delta1()),
            Variant::MtgvW => {
                let (u, w) = x.split_at_mut(px);
                project_l2_ball_slice(u, Some(self.u0()), self.delta1());
                soft_threshold_slice(w, 2, tau);
            }
            Variant::Ctgv => {
                let (u, w) = x.split_at_mut(px);
                project_l2_ball_slice(u, Some(self.u0()), self.delta1());
                project_l1_l2_slice(w, None, 2, self.delta2());
            }
        }
    }

    fn prox_g_conj(&self, y: &mut [f64], sigma: f64) {
        let px = self.px();
        let (p_bound, q_bound) = self.dual_bounds();
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => {
                if let Some(v) = self.v_hat_slice() {
                    y.iter_mut().zip(v).for_each(|(p, v)| *p -= sigma * v);
                }
                project_linf_l2_slice(y, 2, p_bound);
            }
            Variant::Dgtgv1 => {
                let shift = self.hess_u0.as_ref().expect("cached").as_slice();
                y.iter_mut().zip(shift).for_each(|(q, s)| *q -= sigma * s);
                project_linf_l2_slice(y, 4, q_bound);
            }
            Variant::Tgv | Variant::Mtgv => {
                let (p, q) = y.split_at_mut(2 * px);
                project_linf_l2_slice(p, 2, p_bound);
                project_linf_l2_slice(q, 4, q_bound);
            }
            Variant::Dgtv1 | Variant::MtgvW | Variant::Ctgv => project_linf_l2_slice(y, 4, q_bound),
        }
    }

    fn primal_objective(&self, x: &[f64]) -> f64 {
        let px = self.px();
        match self.variant() {
            Variant::RofConstrained | Variant::Dgtv2 => {
                let mut g = self.grad(x);
                if let Some(v) = self.v_hat_slice() {
                    g.iter_mut().zip(v).for_each(|(g, v)| *g -= v);
                }
                self.indicator_ball(x) + mixed_l1_slice(&g, 2)
            }
            Variant::Dgtv1 => {
                let diff: Vec<f64> = x.iter().zip(self.grad_u0.as_slice()).map(|(a, b)| a - b).collect();
                let ind = if within_bound(mixed_l1_slice(&diff, 2), self.delta2()) {
                    0.0
                } else {
                    f64::INFINITY
                };
                ind + mixed_l1_slice(&self.symgrad(x), 2 * 2)
            }
            Variant::Dgtgv1 => {
                let v: Vec<f64> = self.grad_u0.as_slice().iter().zip(x).map(|(g, w)| g - w).collect();
                mixed_l1_slice(x, 2) + self.alpha() * mixed_l1_slice(&self.symgrad(&v), 4)
            }
            Variant::Tgv | Variant::Mtgv => {
                let (u, v) = x.split_at(px);
                let first = mixed_l1_slice(&self.grad_minus(u, v), 2);
                let second = mixed_l1_slice(&self.symgrad(v), 4);
                if self.variant() == Variant::Tgv {
                    let fit: f64 = u.iter().zip(self.u0()).map(|(a, b)| (a - b) * (a - b)).sum();
                    self.alpha1() * first + self.alpha0() * second + 0.5 * fit
                } else {
                    self.indicator_ball(u) + first + self.alpha() * second
                }
            }
            Variant::MtgvW => {
                let (u, w) = x.split_at(px);
                let e = self.symgrad(&self.grad_minus(u, w));
                self.indicator_ball(u) + mixed_l1_slice(w, 2) + self.alpha() * mixed_l1_slice(&e, 4)
            }
            Variant::Ctgv => {
                let (u, w) = x.split_at(px);
                let e = self.symgrad(&self.grad_minus(u, w));
                let ind_w = if within_bound(mixed_l1_slice(w, 2), self.delta2()) {
                    0.0
                } else {
                    f64::INFINITY
                };
                self.indicator_ball(u) + ind_w + mixed_l1_slice(&e, 4)
            }
        }
    }

    fn stopping_gap(&self, x: &[f64], y: &[f64]) -> f64 {
        self.gap_modified(x, y).unwrap_or(f64::INFINITY)
    }

    fn initial_primal(&self) -> Vec<f64> {
        self.start()
    }

    fn structure(&self) -> Option<(Formulation, usize, usize)> {
        Some((self.variant().formulation(), self.rows, self.cols))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grad, hessian, mixed_norm_l1};

    fn image(m: usize, n: usize) -> ScalarField {
        ScalarField::from_fn(m, n, |i, j, _| ((i * 7 + j * 3) % 5) as f64 * 0.2 + 0.01 * (i * j) as f64)
    }

    #[test]
    fn validation_requires_parameters() {
        let u0 = image(4, 4);
        let err = Problem::new(ProblemSpec::new(Variant::Mtgv, u0.clone()).with_delta1(1.0)).unwrap_err();
        assert_eq!(
            err,
            ProblemError::MissingParameter {
                variant: "mtgv",
                name: "alpha"
            }
        );
        assert!(Problem::new(ProblemSpec::new(Variant::Dgtv2, u0.clone()).with_delta1(1.0)).is_err());
        assert!(Problem::new(ProblemSpec::new(Variant::Tgv, u0).with_tgv_weights(2.0, -1.0)).is_err());
    }

    #[test]
    fn mtgv_objective_at_gradient_start() {
        let u0 = image(6, 5);
        let p = Problem::new(ProblemSpec::new(Variant::Mtgv, u0.clone()).with_delta1(0.5).with_alpha(2.0)).unwrap();
        let mut x = u0.as_slice().to_vec();
        x.extend_from_slice(grad(&u0).as_slice());
        let expected = 2.0 * mixed_norm_l1(&hessian(&u0));
        assert!((p.primal_objective(&x) - expected).abs() < 1e-12);
    }

    #[test]
    fn tgv_objective_at_zero_v() {
        let u0 = image(5, 5);
        let p = Problem::new(ProblemSpec::new(Variant::Tgv, u0.clone()).with_tgv_weights(2.0, 1.0)).unwrap();
        let x = p.initial_primal();
        assert!((p.primal_objective(&x) - mixed_norm_l1(&grad(&u0))).abs() < 1e-12);
    }

    #[test]
    fn infeasible_image_has_infinite_gap() {
        let u0 = image(4, 4);
        let p = Problem::new(ProblemSpec::new(Variant::RofConstrained, u0.clone()).with_delta1(0.1)).unwrap();
        let x: Vec<f64> = u0.as_slice().iter().map(|v| v + 0.1).collect();
        let y = vec![0.0; p.dual_len()];
        assert_eq!(p.gap(&x, &y).unwrap(), f64::INFINITY);
    }

    #[test]
    fn mtgv_modified_gap_with_zero_dual_is_objective() {
        let u0 = image(5, 6);
        let p = Problem::new(ProblemSpec::new(Variant::Mtgv, u0).with_delta1(0.3).with_alpha(2.0)).unwrap();
        let x = p.initial_primal();
        let y = vec![0.0; p.dual_len()];
        assert_eq!(p.gap_modified(&x, &y).unwrap(), p.primal_objective(&x));
    }

    #[test]
    fn modified_gap_rejects_infeasible_q() {
        let u0 = image(4, 4);
        let p = Problem::new(ProblemSpec::new(Variant::Mtgv, u0).with_delta1(0.3).with_alpha(2.0)).unwrap();
        let x = p.initial_primal();
        let mut y = vec![0.0; p.dual_len()];
        y[2 * 16] = 2.5;
        assert!(matches!(p.gap_modified(&x, &y), Err(ProblemError::InfeasibleDual { .. })));
    }

    #[test]
    fn w_variable_round_trip() {
        let u = image(5, 4);
        let v = VectorField::from_fn(5, 4, |i, j, k| (i + j * k) as f64 * 0.1);
        let w = to_w_variables(&u, &v);
        let back = from_w_variables(&u, &w);
        for (a, b) in back.as_slice().iter().zip(v.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(to_w_variables(&u, &grad(&u)).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ctgv_k_vanishes_on_gradient_pairs() {
        let u0 = image(5, 5);
        let p = Problem::new(ProblemSpec::new(Variant::Ctgv, u0.clone()).with_delta1(0.1).with_delta2(1.0)).unwrap();
        let mut x = u0.as_slice().to_vec();
        x.extend_from_slice(grad(&u0).as_slice());
        let mut out = vec![1.0; p.dual_len()];
        p.apply_k(&x, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn state_round_trips() {
        let u0 = image(4, 5);
        let p = Problem::new(ProblemSpec::new(Variant::Tgv, u0).with_tgv_weights(2.0, 1.0)).unwrap();
        let x: Vec<f64> = (0..p.primal_len()).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..p.dual_len()).map(|i| -(i as f64)).collect();
        assert_eq!(p.primal_vec(&p.primal_state(&x)).unwrap(), x);
        assert_eq!(p.dual_vec(&p.dual_state(&y)).unwrap(), y);
    }
}
