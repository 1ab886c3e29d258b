use crate::error::PipelineError;
use crate::grid::{self, ScalarField};
use crate::problems::{ProblemSpec, Variant};

/// Constant in `delta2 = c |||grad u0|||_1`.
pub const DEFAULT_C: f64 = 0.99;
/// Penalty weight of the gradient-denoising stage.
pub const DEFAULT_DGTGV_ALPHA: f64 = 1.0;
/// Second-order weight of the Morozov TGV model.
pub const DEFAULT_MTGV_ALPHA: f64 = 2.0;
/// `(alpha0, alpha1)` of the penalized TGV model.
pub const DEFAULT_TGV_WEIGHTS: (f64, f64) = (2.0, 1.0);

/// Gaussian noise level estimated from a single image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEstimate {
    /// Per-pixel standard deviation.
    pub sigma: f64,
    /// Expected noise norm `sigma * sqrt(pixels)`.
    pub delta1: f64,
}

impl NoiseEstimate {
    pub fn from_sigma(sigma: f64, rows: usize, cols: usize) -> Self {
        Self {
            sigma,
            delta1: sigma * ((rows * cols) as f64).sqrt(),
        }
    }
}

/// Median absolute deviation of the diagonal high-pass
/// `(u[i+1,j+1] - u[i+1,j] - u[i,j+1] + u[i,j]) / 2`, which has unit gain
/// on white noise and annihilates affine images.
pub fn estimate_noise_mad(u0: &ScalarField) -> Result<NoiseEstimate, PipelineError> {
    let (m, n) = u0.shape();
    if m < 4 || n < 4 {
        return Err(PipelineError::TooSmall { rows: m, cols: n });
    }
    let u = u0.as_slice();
    let mut d: Vec<f64> = Vec::with_capacity((m - 1) * (n - 1));
    for i in 0..m - 1 {
        for j in 0..n - 1 {
            let v = u[(i + 1) * n + j + 1] - u[(i + 1) * n + j] - u[i * n + j + 1] + u[i * n + j];
            d.push((0.5 * v).abs());
        }
    }
    let mid = d.len() / 2;
    let (_, upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let mut median = *upper;
    if d.len() % 2 == 0 {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        median = 0.5 * (median + lower);
    }
    Ok(NoiseEstimate::from_sigma(median / 0.6745, m, n))
}

/// User-supplied parameter values that replace the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamOverrides {
    pub alpha: Option<f64>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub c: Option<f64>,
}

/// Parameter-free problem for `variant`: `delta1` from the noise estimate,
/// `delta2 = c |||grad u0|||_1` with `c = 0.99`, `alpha = 1` for the
/// gradient-denoising stage, `alpha = 2` for Morozov TGV and
/// `(alpha0, alpha1) = (2, 1)` for penalized TGV.
///
/// The gradient estimate of [`Variant::Dgtv2`] is left unset; it comes from
/// the first stage.
pub fn default_params(variant: Variant, u0: &ScalarField, estimate: &NoiseEstimate) -> ProblemSpec {
    default_params_with(variant, u0, estimate, &ParamOverrides::default())
}

pub fn default_params_with(
    variant: Variant,
    u0: &ScalarField,
    estimate: &NoiseEstimate,
    overrides: &ParamOverrides,
) -> ProblemSpec {
    let mut spec = ProblemSpec::new(variant, u0.clone());
    let c = overrides.c.unwrap_or(DEFAULT_C);
    let delta1 = overrides.delta1.unwrap_or(estimate.delta1);
    let delta2 = || overrides.delta2.unwrap_or_else(|| c * grid::mixed_norm_l1(&grid::grad(u0)));
    match variant {
        Variant::RofConstrained | Variant::Dgtv2 => spec.delta1 = Some(delta1),
        Variant::Dgtv1 => {
            spec.delta2 = Some(delta2());
            spec.c = Some(c);
        }
        Variant::Dgtgv1 => spec.alpha = Some(overrides.alpha.unwrap_or(DEFAULT_DGTGV_ALPHA)),
        Variant::Tgv => {
            spec.alpha0 = Some(overrides.alpha0.unwrap_or(DEFAULT_TGV_WEIGHTS.0));
            spec.alpha1 = Some(overrides.alpha1.unwrap_or(DEFAULT_TGV_WEIGHTS.1));
        }
        Variant::Mtgv | Variant::MtgvW => {
            spec.delta1 = Some(delta1);
            spec.alpha = Some(overrides.alpha.unwrap_or(DEFAULT_MTGV_ALPHA));
        }
        Variant::Ctgv => {
            spec.delta1 = Some(delta1);
            spec.delta2 = Some(delta2());
            spec.c = Some(c);
        }
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_noise() {
        let u = ScalarField::from_fn(8, 9, |_, _, _| 0.3);
        let e = estimate_noise_mad(&u).unwrap();
        assert_eq!(e.sigma, 0.0);
        assert_eq!(e.delta1, 0.0);
    }

    #[test]
    fn affine_image_has_zero_noise() {
        let u = ScalarField::from_fn(8, 8, |i, j, _| 0.1 * i as f64 - 0.05 * j as f64);
        assert!(estimate_noise_mad(&u).unwrap().sigma < 1e-12);
    }

    #[test]
    fn small_images_are_rejected() {
        let u = ScalarField::zeros(3, 8);
        assert!(matches!(estimate_noise_mad(&u), Err(PipelineError::TooSmall { .. })));
    }

    #[test]
    fn defaults_per_variant() {
        let u = ScalarField::from_fn(6, 6, |i, j, _| (i * j) as f64 * 0.01);
        let e = NoiseEstimate::from_sigma(0.1, 6, 6);
        let tv = grid::mixed_norm_l1(&grid::grad(&u));
        assert_eq!(default_params(Variant::Dgtv1, &u, &e).delta2, Some(0.99 * tv));
        let mtgv = default_params(Variant::Mtgv, &u, &e);
        assert_eq!((mtgv.alpha, mtgv.delta1), (Some(2.0), Some(e.delta1)));
        assert_eq!(e.delta1, 0.1 * 6.0);
        assert_eq!(default_params(Variant::Dgtgv1, &u, &e).alpha, Some(1.0));
        let tgv = default_params(Variant::Tgv, &u, &e);
        assert_eq!((tgv.alpha0, tgv.alpha1), (Some(2.0), Some(1.0)));
    }
}
