//! Ball projections and proximal maps.
//!
//! Every routine has a slice form working on channel-major data (used by the
//! solvers on flat iterates) and a field form.

use crate::grid::{norm2, pixel_norm, Grid, ScalarField, TensorField};

/// Shape of a constraint ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallKind {
    /// `||x - c||_2 <= r`.
    L2AroundCenter,
    /// Every pixel group satisfies `|x_ij| <= r`.
    LinfOfL2,
    /// `sum_ij |x_ij - c_ij| <= r`.
    L1OfL2,
}

/// A ball in one of the three norms used by the denoising models.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSpec {
    pub kind: BallKind,
    pub radius: f64,
    pub center: Option<Vec<f64>>,
}

impl BallSpec {
    pub fn new(kind: BallKind, radius: f64) -> Self {
        assert!(radius >= 0.0, "ball radius must be non-negative");
        Self {
            kind,
            radius,
            center: None,
        }
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Self {
        self.center = Some(center);
        self
    }

    /// Projects channel-major `data` with `channels` entries per pixel.
    pub fn project_in_place(&self, data: &mut [f64], channels: usize) {
        if let Some(c) = &self.center {
            assert_eq!(c.len(), data.len(), "center shape mismatch");
        }
        let center = self.center.as_deref();
        match self.kind {
            BallKind::L2AroundCenter => project_l2_ball_slice(data, center, self.radius),
            BallKind::LinfOfL2 => {
                assert!(center.is_none(), "centered ell-inf ball is not supported");
                project_linf_l2_slice(data, channels, self.radius)
            }
            BallKind::L1OfL2 => project_l1_l2_slice(data, center, channels, self.radius),
        }
    }

    /// Norm of `data - center` in the ball's norm.
    pub fn distance(&self, data: &[f64], channels: usize) -> f64 {
        let shifted: Vec<f64> = match &self.center {
            Some(c) => data.iter().zip(c).map(|(x, c)| x - c).collect(),
            None => data.to_vec(),
        };
        match self.kind {
            BallKind::L2AroundCenter => norm2(&shifted),
            BallKind::LinfOfL2 => crate::grid::mixed_linf_slice(&shifted, channels),
            BallKind::L1OfL2 => crate::grid::mixed_l1_slice(&shifted, channels),
        }
    }
}

// ---------------------------------------------------------------------------
// Slice kernels.

pub(crate) fn project_l2_ball_slice(data: &mut [f64], center: Option<&[f64]>, radius: f64) {
    let dist = match center {
        Some(c) => data
            .iter()
            .zip(c)
            .map(|(x, c)| (x - c) * (x - c))
            .sum::<f64>()
            .sqrt(),
        None => norm2(data),
    };
    if dist <= radius {
        return;
    }
    let scale = radius / dist;
    match center {
        Some(c) => {
            for (x, c) in data.iter_mut().zip(c) {
                *x = c + scale * (*x - c);
            }
        }
        None => data.iter_mut().for_each(|x| *x *= scale),
    }
}

pub(crate) fn project_linf_l2_slice(data: &mut [f64], channels: usize, radius: f64) {
    let px = data.len() / channels;
    for idx in 0..px {
        let mag = pixel_norm(data, px, channels, idx);
        if mag > radius {
            let scale = if mag > 0.0 { radius / mag } else { 0.0 };
            for k in 0..channels {
                data[k * px + idx] *= scale;
            }
        }
    }
}

/// Threshold `lambda` with `sum max(m_i - lambda, 0) = radius`, for
/// magnitudes whose sum exceeds `radius > 0`.
pub(crate) fn l1_threshold(magnitudes: &[f64], radius: f64) -> f64 {
    let mut sorted: Vec<f64> = magnitudes.iter().copied().filter(|&m| m > 0.0).collect();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut lambda = 0.0;
    for (k, &m) in sorted.iter().enumerate() {
        cumulative += m;
        let candidate = (cumulative - radius) / (k + 1) as f64;
        if m > candidate {
            lambda = candidate;
        } else {
            break;
        }
    }
    if lambda.is_finite() && lambda >= 0.0 {
        lambda
    } else {
        bisect_threshold(magnitudes, radius)
    }
}

fn bisect_threshold(magnitudes: &[f64], radius: f64) -> f64 {
    let excess = |lambda: f64| -> f64 {
        magnitudes.iter().map(|&m| (m - lambda).max(0.0)).sum::<f64>() - radius
    };
    let (mut lo, mut hi) = (0.0, magnitudes.iter().copied().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub(crate) fn project_l1_l2_slice(data: &mut [f64], center: Option<&[f64]>, channels: usize, radius: f64) {
    let px = data.len() / channels;
    if let Some(c) = center {
        data.iter_mut().zip(c).for_each(|(x, c)| *x -= c);
    }
    let magnitudes: Vec<f64> = (0..px).map(|idx| pixel_norm(data, px, channels, idx)).collect();
    let total: f64 = magnitudes.iter().sum();
    if total > radius {
        if radius == 0.0 {
            data.fill(0.0);
        } else {
            let lambda = l1_threshold(&magnitudes, radius);
            shrink_groups(data, channels, &magnitudes, lambda);
        }
    }
    if let Some(c) = center {
        data.iter_mut().zip(c).for_each(|(x, c)| *x += c);
    }
}

fn shrink_groups(data: &mut [f64], channels: usize, magnitudes: &[f64], lambda: f64) {
    let px = magnitudes.len();
    for (idx, &mag) in magnitudes.iter().enumerate() {
        let scale = if mag > lambda { (mag - lambda) / mag } else { 0.0 };
        for k in 0..channels {
            data[k * px + idx] *= scale;
        }
    }
}

/// Group soft-thresholding: `prox` of `tau |||.|||_1`, via Moreau's identity
/// `x - tau * proj_{|||.|||_inf <= 1}(x / tau)`.
pub(crate) fn soft_threshold_slice(data: &mut [f64], channels: usize, tau: f64) {
    let mut scaled: Vec<f64> = data.iter().map(|x| x / tau).collect();
    project_linf_l2_slice(&mut scaled, channels, 1.0);
    for (x, p) in data.iter_mut().zip(&scaled) {
        *x -= tau * p;
    }
}

// ---------------------------------------------------------------------------
// Field API.

/// Euclidean projection onto `{x : ||x - center||_2 <= radius}`.
pub fn project_l2_ball(u: &ScalarField, center: &ScalarField, radius: f64) -> ScalarField {
    assert!(radius >= 0.0);
    assert!(u.same_shape(center), "shape mismatch");
    let mut out = u.clone();
    project_l2_ball_slice(out.as_mut_slice(), Some(center.as_slice()), radius);
    out
}

/// Shrinks every pixel group onto the Euclidean ball of radius `radius`.
pub fn project_linf_l2_ball<const C: usize>(x: &Grid<C>, radius: f64) -> Grid<C> {
    assert!(radius >= 0.0);
    let mut out = x.clone();
    project_linf_l2_slice(out.as_mut_slice(), C, radius);
    out
}

/// Euclidean projection onto `{y : |||y - center|||_1 <= radius}`.
pub fn project_l1_l2_ball<const C: usize>(x: &Grid<C>, center: Option<&Grid<C>>, radius: f64) -> Grid<C> {
    assert!(radius >= 0.0);
    let mut out = x.clone();
    project_l1_l2_slice(out.as_mut_slice(), center.map(|c| c.as_slice()), C, radius);
    out
}

/// `prox_{tau F}(x) = x - tau * proj(x / tau)` where `proj` is the prox of
/// the conjugate `F*` (a projection, so its step size drops out).
pub fn prox_via_moreau<const C: usize>(
    x: &Grid<C>,
    tau: f64,
    proj_conj: impl Fn(&Grid<C>) -> Grid<C>,
) -> Grid<C> {
    assert!(tau > 0.0);
    let p = proj_conj(&x.scaled(1.0 / tau));
    x.add_scaled(-tau, &p)
}

/// `prox` of `tau |||.|||_1`.
pub fn group_soft_threshold<const C: usize>(x: &Grid<C>, tau: f64) -> Grid<C> {
    prox_via_moreau(x, tau, |y| project_linf_l2_ball(y, 1.0))
}

/// `prox` of `t/2 ||. - u0||^2`: `(u + t u0) / (1 + t)`.
pub fn prox_tgv_data(u: &ScalarField, u0: &ScalarField, t: f64) -> ScalarField {
    assert!(t >= 0.0);
    assert!(u.same_shape(u0));
    let data = u
        .as_slice()
        .iter()
        .zip(u0.as_slice())
        .map(|(a, b)| (a + t * b) / (1.0 + t))
        .collect();
    ScalarField::from_vec(u.rows(), u.cols(), data).expect("shape preserved")
}

/// Projects `q - sigma * shift` onto the `ell-inf`-of-`ell-2` ball.
pub fn prox_shifted_linf(q: &TensorField, sigma: f64, shift: &TensorField, radius: f64) -> TensorField {
    project_linf_l2_ball(&q.add_scaled(-sigma, shift), radius)
}
