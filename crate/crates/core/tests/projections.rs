mod common;

use common::*;
use proptest::prelude::*;
use tgvd::grid::{self, Grid, ScalarField, TensorField, VectorField};
use tgvd::prox::{
    group_soft_threshold, project_l1_l2_ball, project_l2_ball, project_linf_l2_ball, prox_shifted_linf,
    prox_tgv_data, prox_via_moreau, BallKind, BallSpec,
};

/// Independent oracle for the mixed-ball projection: projected gradient
/// ascent on the scalar dual variable `lambda >= 0` of the constraint,
/// followed by group shrinkage at the dual optimum.
fn l1_l2_oracle(x: &VectorField, radius: f64) -> VectorField {
    let mags = grid::pointwise_magnitude(x);
    let m = mags.as_slice();
    if m.iter().sum::<f64>() <= radius {
        return x.clone();
    }
    let step = 1.0 / m.len() as f64;
    let mut lambda: f64 = 0.0;
    for _ in 0..100_000 {
        let slope: f64 = m.iter().map(|&g| (g - lambda).max(0.0)).sum::<f64>() - radius;
        let next = (lambda + step * slope).max(0.0);
        if (next - lambda).abs() <= 1e-15 {
            break;
        }
        lambda = next;
    }
    let px = x.pixels();
    let mut out = x.clone();
    for idx in 0..px {
        let scale = if m[idx] > lambda { (m[idx] - lambda) / m[idx] } else { 0.0 };
        for k in 0..2 {
            out.as_mut_slice()[k * px + idx] *= scale;
        }
    }
    out
}

fn firmly_nonexpansive(px: &[f64], py: &[f64], x: &[f64], y: &[f64]) -> bool {
    let dp: Vec<f64> = px.iter().zip(py).map(|(a, b)| a - b).collect();
    let dx: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    dot(&dp, &dp) <= dot(&dp, &dx) + 1e-12 * (1.0 + dot(&dx, &dx))
}

#[test]
fn l2_ball_examples() {
    let c = ScalarField::from_fn(3, 3, |i, j, _| (i * 3 + j) as f64 / 9.0);
    let inside = c.map(|v| v + 0.01);
    assert_eq!(project_l2_ball(&inside, &c, 1.0), inside);

    let e = ScalarField::from_fn(3, 3, |i, j, _| if i == 1 && j == 2 { 1.0 } else { 0.0 });
    let delta = 0.4;
    let far = c.add_scaled(2.0 * delta, &e);
    let got = project_l2_ball(&far, &c, delta);
    assert!(dist(got.as_slice(), c.add_scaled(delta, &e).as_slice()) < 1e-15);
    assert_eq!(project_l2_ball(&far, &c, 0.0), c);
}

#[test]
fn l2_ball_satisfies_kkt() {
    // p - u = -mu (p - c) with mu >= 0, and ||p - c|| = delta when mu > 0.
    let mut r = rng(11);
    for _ in 0..50 {
        let u: ScalarField = random_field(&mut r, 3, 3);
        let c: ScalarField = random_field(&mut r, 3, 3);
        let delta = 0.5;
        let p = project_l2_ball(&u, &c, delta);
        let pc: Vec<f64> = p.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a - b).collect();
        let up: Vec<f64> = u.as_slice().iter().zip(p.as_slice()).map(|(a, b)| a - b).collect();
        if norm(&up) == 0.0 {
            assert!(norm(&pc) <= delta);
            continue;
        }
        assert!((norm(&pc) - delta).abs() <= 1e-12);
        let mu = dot(&up, &pc) / dot(&pc, &pc);
        assert!(mu > 0.0);
        let resid: Vec<f64> = up.iter().zip(&pc).map(|(a, b)| a - mu * b).collect();
        assert!(norm(&resid) <= 1e-12 * (1.0 + norm(&up)));
    }
}

#[test]
fn linf_ball_examples() {
    let v = VectorField::from_fn(2, 2, |i, j, k| if i + j == 0 { [3.0, 4.0][k] } else { 0.1 });
    let p = project_linf_l2_ball(&v, 1.0);
    assert!((p.get(0, 0, 0) - 0.6).abs() < 1e-15 && (p.get(0, 0, 1) - 0.8).abs() < 1e-15);
    assert_eq!(p.get(1, 1, 0), 0.1);
}

#[test]
fn mixed_ball_hand_solved() {
    // Magnitudes (3, 1, 0, 0) with radius 2: lambda = 1, magnitudes (2, 0).
    let x = VectorField::from_fn(2, 2, |i, j, k| match (i, j, k) {
        (0, 0, 0) => 3.0,
        (0, 1, 1) => -1.0,
        _ => 0.0,
    });
    let p = project_l1_l2_ball(&x, None, 2.0);
    let mags = grid::pointwise_magnitude(&p);
    assert!((mags.get(0, 0, 0) - 2.0).abs() < 1e-14);
    assert_eq!(mags.get(0, 1, 0), 0.0);
    assert_eq!(project_l1_l2_ball(&x, None, 10.0), x);
    let c = VectorField::from_fn(2, 2, |_, _, k| k as f64);
    assert_eq!(project_l1_l2_ball(&x, Some(&c), 0.0), c);
}

#[test]
fn mixed_ball_matches_dual_oracle() {
    let mut r = rng(12);
    for trial in 0..500 {
        let x: VectorField = random_field(&mut r, 2, 2);
        let radius = [0.05, 0.3, 1.0, 2.5][trial % 4];
        let got = project_l1_l2_ball(&x, None, radius);
        let want = l1_l2_oracle(&x, radius);
        assert!(dist(got.as_slice(), want.as_slice()) <= 1e-8, "trial {trial}");
    }
}

#[test]
fn mixed_ball_is_tight_when_active() {
    let mut r = rng(13);
    for _ in 0..100 {
        let x: VectorField = random_field(&mut r, 5, 4);
        let c: VectorField = random_field(&mut r, 5, 4);
        let radius = 0.7;
        let p = project_l1_l2_ball(&x, Some(&c), radius);
        let norm = grid::mixed_norm_l1(&p.add_scaled(-1.0, &c));
        assert!((norm - radius).abs() <= 1e-9 * radius);
    }
}

#[test]
fn ball_spec_dispatch() {
    let mut r = rng(14);
    let x: VectorField = random_field(&mut r, 4, 4);
    let mut data = x.as_slice().to_vec();
    let spec = BallSpec::new(BallKind::L1OfL2, 0.5);
    spec.project_in_place(&mut data, 2);
    assert_eq!(data, project_l1_l2_ball(&x, None, 0.5).into_vec());
    assert!((spec.distance(&data, 2) - 0.5).abs() < 1e-12);

    let mut data = x.as_slice().to_vec();
    BallSpec::new(BallKind::LinfOfL2, 0.2).project_in_place(&mut data, 2);
    assert_eq!(data, project_linf_l2_ball(&x, 0.2).into_vec());
}

#[test]
fn soft_threshold_examples() {
    let v = VectorField::from_fn(2, 2, |i, j, k| match (i + j, k) {
        (0, 1) => 5.0,
        (1, 0) => 1.5,
        _ => 0.0,
    });
    let s = group_soft_threshold(&v, 2.0);
    assert!((s.get(0, 0, 1) - 3.0).abs() < 1e-14);
    assert_eq!(s.get(0, 0, 0), 0.0);
    assert_eq!(s.get(0, 1, 0), 0.0);
    assert_eq!(s.get(1, 0, 0), 0.0);
}

#[test]
fn soft_threshold_matches_closed_form() {
    let mut r = rng(15);
    let x: TensorField = random_field(&mut r, 6, 5);
    let tau = 0.6;
    let got = group_soft_threshold(&x, tau);
    let mags = grid::pointwise_magnitude(&x);
    let px = x.pixels();
    for idx in 0..px {
        let m = mags.as_slice()[idx];
        let scale = (1.0 - tau / m).max(0.0);
        for k in 0..4 {
            let want = scale * x.as_slice()[k * px + idx];
            assert!((got.as_slice()[k * px + idx] - want).abs() < 1e-14);
        }
    }
}

#[test]
fn moreau_decomposition() {
    // prox_{tau F}(x) + tau prox_{F*/tau}(x / tau) = x for F = |||.|||_1.
    let mut r = rng(16);
    for tau in [0.1, 1.0, 3.0] {
        let x: VectorField = random_field(&mut r, 4, 6);
        let prox = prox_via_moreau(&x, tau, |y| project_linf_l2_ball(y, 1.0));
        let conj = project_linf_l2_ball(&x.scaled(1.0 / tau), 1.0);
        let sum = prox.add_scaled(tau, &conj);
        assert!(dist(sum.as_slice(), x.as_slice()) < 1e-14);
        assert_eq!(prox, group_soft_threshold(&x, tau));
    }
}

#[test]
fn data_prox_examples() {
    let mut r = rng(17);
    let u: ScalarField = random_field(&mut r, 4, 4);
    let u0: ScalarField = random_field(&mut r, 4, 4);
    assert_eq!(prox_tgv_data(&u, &u0, 0.0), u);
    assert!(dist(prox_tgv_data(&u, &u0, 1e8).as_slice(), u0.as_slice()) <= 1e-7);
    assert!(dist(prox_tgv_data(&u0, &u0, 0.7).as_slice(), u0.as_slice()) < 1e-15);
}

#[test]
fn shifted_projection_examples() {
    let mut r = rng(18);
    let q: TensorField = random_field(&mut r, 3, 4);
    let shift: TensorField = random_field(&mut r, 3, 4);
    let zero = TensorField::zeros(3, 4);
    assert_eq!(prox_shifted_linf(&q, 0.5, &zero, 0.3), project_linf_l2_ball(&q, 0.3));
    assert_eq!(
        prox_shifted_linf(&zero, 0.5, &shift, 0.3),
        project_linf_l2_ball(&shift.scaled(-0.5), 0.3)
    );
    assert_eq!(
        prox_shifted_linf(&q, 0.5, &shift, 0.3),
        project_linf_l2_ball(&q.add_scaled(-0.5, &shift), 0.3)
    );
}

fn field_pair<const C: usize>() -> impl Strategy<Value = (Grid<C>, Grid<C>, Grid<C>, f64)> {
    (2usize..6, 2usize..6, any::<u64>(), 0.0f64..3.0).prop_map(|(m, n, seed, radius)| {
        let mut r = rng(seed);
        let x = random_field::<C>(&mut r, m, n).scaled(2.0);
        let y = random_field::<C>(&mut r, m, n).scaled(2.0);
        let c = random_field::<C>(&mut r, m, n);
        (x, y, c, radius)
    })
}

proptest! {
    #[test]
    fn l2_ball_properties((x, y, c, radius) in field_pair::<1>()) {
        let px = project_l2_ball(&x, &c, radius);
        let py = project_l2_ball(&y, &c, radius);
        prop_assert!(grid::norm_l2(&px.add_scaled(-1.0, &c)) <= radius * (1.0 + 1e-12) + 1e-15);
        prop_assert!(dist(project_l2_ball(&px, &c, radius).as_slice(), px.as_slice()) <= 1e-12);
        prop_assert!(firmly_nonexpansive(px.as_slice(), py.as_slice(), x.as_slice(), y.as_slice()));
    }

    #[test]
    fn linf_ball_properties((x, y, _c, radius) in field_pair::<4>()) {
        let px = project_linf_l2_ball(&x, radius);
        let py = project_linf_l2_ball(&y, radius);
        prop_assert!(grid::mixed_norm_linf(&px) <= radius * (1.0 + 1e-12));
        prop_assert!(dist(project_linf_l2_ball(&px, radius).as_slice(), px.as_slice()) <= 1e-12);
        prop_assert!(firmly_nonexpansive(px.as_slice(), py.as_slice(), x.as_slice(), y.as_slice()));
    }

    #[test]
    fn mixed_ball_properties((x, y, c, radius) in field_pair::<2>()) {
        let px = project_l1_l2_ball(&x, Some(&c), radius);
        let py = project_l1_l2_ball(&y, Some(&c), radius);
        prop_assert!(grid::mixed_norm_l1(&px.add_scaled(-1.0, &c)) <= radius * (1.0 + 1e-9) + 1e-12);
        prop_assert!(dist(project_l1_l2_ball(&px, Some(&c), radius).as_slice(), px.as_slice()) <= 1e-12);
        prop_assert!(firmly_nonexpansive(px.as_slice(), py.as_slice(), x.as_slice(), y.as_slice()));
    }
}
