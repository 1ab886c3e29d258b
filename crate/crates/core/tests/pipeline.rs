mod common;

use common::*;
use tgvd::grid::{self, ScalarField};
use tgvd::pipeline::{
    add_noise, alpha_sweep, default_params, denoise, estimate_noise_mad, psnr, run_benchmark, synthetic_image,
    write_benchmark_csv, BenchmarkConfig, DenoiseOptions, Method, NamedImage, NoiseEstimate, ParamOverrides,
    SYNTHETIC_IMAGES,
};
use tgvd::problems::Variant;
use tgvd::PipelineError;

fn images(size: usize) -> Vec<NamedImage> {
    SYNTHETIC_IMAGES
        .iter()
        .map(|n| NamedImage::new(*n, synthetic_image(n, size).unwrap()))
        .collect()
}

fn single_thread() -> BenchmarkConfig {
    BenchmarkConfig {
        threads: Some(1),
        ..Default::default()
    }
}

#[test]
fn noise_estimate_scales_with_sigma() {
    let clean = synthetic_image("smooth", 64).unwrap();
    let mean = |factor: f64| -> f64 {
        (0..20)
            .map(|seed| estimate_noise_mad(&add_noise(&clean, "smooth", factor, seed)).unwrap().sigma)
            .sum::<f64>()
            / 20.0
    };
    let (s1, s2) = (mean(0.05), mean(0.1));
    assert!((s2 / s1 - 2.0).abs() <= 0.2, "{s1} -> {s2}");
    assert!((s1 / 0.05 - 1.0).abs() <= 0.1, "{s1}");
}

#[test]
fn noise_norm_is_sigma_times_root_pixels() {
    let u = add_noise(&synthetic_image("eye", 24).unwrap(), "eye", 0.1, 3);
    let e = estimate_noise_mad(&u).unwrap();
    assert_eq!(e.delta1, e.sigma * (24.0f64 * 24.0).sqrt());
    assert_eq!(NoiseEstimate::from_sigma(0.5, 4, 9).delta1, 3.0);
}

#[test]
fn psnr_values() {
    let a = ScalarField::from_fn(4, 4, |i, j, _| (i + j) as f64 / 8.0);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    let b = a.map(|v| v + 0.01);
    assert!((psnr(&b, &a).unwrap() - 40.0).abs() < 1e-9);
}

#[test]
fn two_stage_output_is_feasible() {
    let clean = synthetic_image("eye", 24).unwrap();
    let u0 = add_noise(&clean, "eye", 0.1, 1);
    let est = estimate_noise_mad(&u0).unwrap();
    let options = DenoiseOptions::default();
    for method in [Method::Dgtgv, Method::Dgtv, Method::Mtgv, Method::Rof, Method::MtgvW] {
        let out = denoise(method, &u0, &est, &options).unwrap();
        let d = grid::norm_l2(&out.image.add_scaled(-1.0, &u0));
        assert!(d <= est.delta1 * (1.0 + 1e-6), "{method}: {d} > {}", est.delta1);
        assert_eq!(out.stages.len(), if method.variant().is_none() { 2 } else { 1 });
        assert!(psnr(&out.image, &clean).unwrap() > psnr(&u0, &clean).unwrap(), "{method}");
    }
}

#[test]
fn default_parameters() {
    let u0 = add_noise(&synthetic_image("ramp", 16).unwrap(), "ramp", 0.1, 0);
    let est = estimate_noise_mad(&u0).unwrap();
    let tv = grid::mixed_norm_l1(&grid::grad(&u0));
    let s = default_params(Variant::Dgtv1, &u0, &est);
    assert_eq!(s.delta2, Some(0.99 * tv));
    assert_eq!(default_params(Variant::Dgtgv1, &u0, &est).alpha, Some(1.0));
    assert_eq!(default_params(Variant::Mtgv, &u0, &est).alpha, Some(2.0));
    assert_eq!(default_params(Variant::Mtgv, &u0, &est).delta1, Some(est.delta1));
    let t = default_params(Variant::Tgv, &u0, &est);
    assert_eq!((t.alpha0, t.alpha1), (Some(2.0), Some(1.0)));
}

#[test]
fn invalid_overrides_fail_before_solving() {
    let u0 = add_noise(&synthetic_image("ramp", 16).unwrap(), "ramp", 0.1, 0);
    let est = estimate_noise_mad(&u0).unwrap();
    let mut options = DenoiseOptions::default();
    options.params = ParamOverrides {
        alpha: Some(-1.0),
        ..Default::default()
    };
    // A solve would take far longer than the cap allows to notice.
    options.max_iters = 1;
    assert!(matches!(
        denoise(Method::Mtgv, &u0, &est, &options),
        Err(PipelineError::Problem(_))
    ));
    options.params = ParamOverrides::default();
    options.gap_tol = 0.0;
    assert!(denoise(Method::Dgtgv, &u0, &est, &options).is_err());
}

#[test]
fn tv_gradient_budget_of_one_reduces_to_tv() {
    // With c >= 1 the zero gradient is feasible and optimal for the first
    // stage, so the second stage is plain constrained TV.
    let clean = synthetic_image("smooth", 20).unwrap();
    let u0 = add_noise(&clean, "smooth", 0.1, 2);
    let est = estimate_noise_mad(&u0).unwrap();
    let mut options = DenoiseOptions::default();
    options.gap_tol = 1e-6;
    options.max_iters = 200_000;
    let tv = psnr(&denoise(Method::Rof, &u0, &est, &options).unwrap().image, &clean).unwrap();
    for c in [1.0, 1.5] {
        options.params.c = Some(c);
        let out = denoise(Method::Dgtv, &u0, &est, &options).unwrap();
        let got = psnr(&out.image, &clean).unwrap();
        assert!((got - tv).abs() <= 1e-2, "c = {c}: {got} vs {tv}");
    }
}

#[test]
fn benchmark_is_deterministic() {
    let imgs = images(16);
    let run = || run_benchmark(&imgs, &[0.1], &[Method::Dgtgv, Method::Mtgv], &single_thread());
    let (a, b) = (run(), run());
    assert!(a.failures.is_empty());
    assert_eq!(a.rows.len(), 6);
    let strip = |rows: &[tgvd::pipeline::BenchmarkRow]| rows.iter().map(|r| r.without_timing()).collect::<Vec<_>>();
    assert_eq!(strip(&a.rows), strip(&b.rows));
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_benchmark_csv(&strip(&a.rows), &mut ca).unwrap();
    write_benchmark_csv(&strip(&b.rows), &mut cb).unwrap();
    assert_eq!(ca, cb);
    for row in &a.rows {
        assert!(row.psnr_db.is_finite() && row.time_s >= 0.0);
    }

    let parallel = BenchmarkConfig {
        threads: Some(3),
        ..Default::default()
    };
    let c = run_benchmark(&imgs, &[0.1], &[Method::Dgtgv, Method::Mtgv], &parallel);
    assert_eq!(strip(&a.rows), strip(&c.rows));
}

#[test]
fn sweep_reports_the_argmax() {
    let imgs = vec![NamedImage::new("eye", synthetic_image("eye", 16).unwrap())];
    let grid = [0.5, 1.0, 2.0];
    let out = alpha_sweep(Method::Dgtgv, &imgs, &[0.1], &grid, &single_thread());
    assert_eq!(out.len(), 1);
    let s = &out[0];
    assert_eq!(s.psnrs.len(), 3);
    let best = s.psnrs.iter().copied().fold((f64::NAN, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
    assert_eq!((s.best_value, s.best_psnr_db), best);
    assert_eq!(s.parameter, "alpha");
}

#[test]
fn ctgv_budget_comes_from_tv_presolve() {
    let u0 = add_noise(&synthetic_image("eye", 16).unwrap(), "eye", 0.1, 4);
    let est = estimate_noise_mad(&u0).unwrap();
    let options = DenoiseOptions::default();
    let out = denoise(Method::Ctgv, &u0, &est, &options).unwrap();
    let tv_u0 = grid::mixed_norm_l1(&grid::grad(&u0));
    let delta2 = out.stages[0].spec.delta2.unwrap();
    assert!(delta2 > 0.0 && delta2 < 0.99 * tv_u0);
}
