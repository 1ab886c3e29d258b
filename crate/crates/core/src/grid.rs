//! Pixel-grid fields and the matrix-free forward-difference calculus.
//!
//! Fields are stored row-major with channel-major stacking: entry `(i, j, k)`
//! of an `M x N x C` field lives at `k * M * N + i * N + j`. This is the same
//! vectorization the sparse assembly uses, so `vec(grad u) == G * vec(u)`.
//!
//! Forward differences use constant extension past the last row/column, so
//! the last row of `d1_forward(u)` and the last column of `d2_forward(u)` are
//! zero. Adjoints are written out as explicit transposed stencils.

use std::fmt;

use crate::error::GridError;

/// An `M x N` grid carrying `C` real channels per pixel.
#[derive(Clone, PartialEq)]
pub struct Grid<const C: usize> {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Single-channel image `u`.
pub type ScalarField = Grid<1>;
/// Two-channel field such as `grad u`, `v`, `w` or the dual `p`.
pub type VectorField = Grid<2>;
/// Four-channel field `(E11, E12, E21, E22)`; the off-diagonal is stored twice.
pub type TensorField = Grid<4>;

impl<const C: usize> fmt::Debug for Grid<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("channels", &C)
            .finish_non_exhaustive()
    }
}

impl<const C: usize> Grid<C> {
    pub const CHANNELS: usize = C;

    /// All-zero field. Panics if `rows < 2` or `cols < 2`; use
    /// [`Grid::try_zeros`] for fallible construction.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::try_zeros(rows, cols).expect("grid dimensions must be at least 2x2")
    }

    pub fn try_zeros(rows: usize, cols: usize) -> Result<Self, GridError> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; rows * cols * C],
        })
    }

    /// Wraps channel-major data, validating shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, GridError> {
        check_dims(rows, cols)?;
        let expected = rows * cols * C;
        if data.len() != expected {
            return Err(GridError::Length {
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a field by evaluating `f(i, j, k)` at every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(rows, cols);
        for k in 0..C {
            for i in 0..rows {
                for j in 0..cols {
                    out.data[k * rows * cols + i * cols + j] = f(i, j, k);
                }
            }
        }
        out
    }

    /// Field of the same shape as `other`, all zeros.
    pub fn zeros_like<const D: usize>(other: &Grid<D>) -> Self {
        Self::zeros(other.rows, other.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of pixels `M * N`.
    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// Total number of scalar entries `M * N * C`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[k * n..(k + 1) * n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[k * self.pixels() + i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let n = self.pixels();
        self.data[k * n + i * self.cols + j] = value;
    }

    pub fn same_shape<const D: usize>(&self, other: &Grid<D>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self + scale * other`, entrywise.
    pub fn add_scaled(&self, scale: f64, other: &Self) -> Self {
        assert!(self.same_shape(other), "shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Self { data, ..*self }
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            data: self.data.iter().map(|x| scale * x).collect(),
            ..*self
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&x| f(x)).collect(),
            ..*self
        }
    }
}

impl ScalarField {
    /// Matrix transpose of a single-channel image.
    pub fn transposed(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j, _| self.get(j, i, 0))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<(), GridError> {
    if rows < 2 || cols < 2 {
        Err(GridError::Dimensions { rows, cols })
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Slice kernels. `m` rows, `n` columns, single channel.

/// `dst = D1 src` (difference along rows, last row zero).
pub(crate) fn d1_into(src: &[f64], dst: &mut [f64], m: usize, n: usize) {
    for i in 0..m - 1 {
        let (cur, next) = (i * n, (i + 1) * n);
        for j in 0..n {
            dst[cur + j] = src[next + j] - src[cur + j];
        }
    }
    dst[(m - 1) * n..m * n].fill(0.0);
}

/// `dst = D2 src` (difference along columns, last column zero).
pub(crate) fn d2_into(src: &[f64], dst: &mut [f64], m: usize, n: usize) {
    for i in 0..m {
        let row = i * n;
        for j in 0..n - 1 {
            dst[row + j] = src[row + j + 1] - src[row + j];
        }
        dst[row + n - 1] = 0.0;
    }
}

/// `dst += scale * D1^T src`.
pub(crate) fn d1t_add(src: &[f64], dst: &mut [f64], m: usize, n: usize, scale: f64) {
    for j in 0..n {
        dst[j] -= scale * src[j];
    }
    for i in 1..m - 1 {
        let (prev, cur) = ((i - 1) * n, i * n);
        for j in 0..n {
            dst[cur + j] += scale * (src[prev + j] - src[cur + j]);
        }
    }
    let (prev, last) = ((m - 2) * n, (m - 1) * n);
    for j in 0..n {
        dst[last + j] += scale * src[prev + j];
    }
}

/// `dst += scale * D2^T src`.
pub(crate) fn d2t_add(src: &[f64], dst: &mut [f64], m: usize, n: usize, scale: f64) {
    for i in 0..m {
        let row = i * n;
        dst[row] -= scale * src[row];
        for j in 1..n - 1 {
            dst[row + j] += scale * (src[row + j - 1] - src[row + j]);
        }
        dst[row + n - 1] += scale * src[row + n - 2];
    }
}

/// `out = grad u` on raw slices (`u`: n px, `out`: 2 n px).
pub(crate) fn grad_into(u: &[f64], out: &mut [f64], m: usize, n: usize) {
    let px = m * n;
    let (g1, g2) = out.split_at_mut(px);
    d1_into(u, g1, m, n);
    d2_into(u, g2, m, n);
}

/// `out += scale * grad^T p = -scale * div p`.
pub(crate) fn grad_t_add(p: &[f64], out: &mut [f64], m: usize, n: usize, scale: f64) {
    let px = m * n;
    d1t_add(&p[..px], out, m, n, scale);
    d2t_add(&p[px..2 * px], out, m, n, scale);
}

/// `out = E v` on raw slices (`v`: 2 px, `out`: 4 px).
pub(crate) fn symgrad_into(v: &[f64], out: &mut [f64], m: usize, n: usize, scratch: &mut [f64]) {
    let px = m * n;
    let (v1, v2) = v.split_at(px);
    let (e11, rest) = out.split_at_mut(px);
    let (e12, rest) = rest.split_at_mut(px);
    let (e21, e22) = rest.split_at_mut(px);
    d1_into(v1, e11, m, n);
    d2_into(v2, e22, m, n);
    d2_into(v1, e12, m, n);
    d1_into(v2, &mut scratch[..px], m, n);
    for idx in 0..px {
        let off = 0.5 * (e12[idx] + scratch[idx]);
        e12[idx] = off;
        e21[idx] = off;
    }
}

/// `out += scale * E^T q` on raw slices (`q`: 4 px, `out`: 2 px).
pub(crate) fn symgrad_t_add(q: &[f64], out: &mut [f64], m: usize, n: usize, scale: f64, scratch: &mut [f64]) {
    let px = m * n;
    let off = &mut scratch[..px];
    for idx in 0..px {
        off[idx] = 0.5 * (q[px + idx] + q[2 * px + idx]);
    }
    let (o1, o2) = out.split_at_mut(px);
    d1t_add(&q[..px], o1, m, n, scale);
    d2t_add(off, o1, m, n, scale);
    d1t_add(off, o2, m, n, scale);
    d2t_add(&q[3 * px..4 * px], o2, m, n, scale);
}

// ---------------------------------------------------------------------------
// Field-level operators.

pub fn d1_forward(u: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros_like(u);
    d1_into(u.as_slice(), out.as_mut_slice(), u.rows, u.cols);
    out
}

pub fn d2_forward(u: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros_like(u);
    d2_into(u.as_slice(), out.as_mut_slice(), u.rows, u.cols);
    out
}

/// Discrete gradient; channel `k` holds the `k`-th forward difference.
pub fn grad(u: &ScalarField) -> VectorField {
    let mut out = VectorField::zeros_like(u);
    grad_into(u.as_slice(), out.as_mut_slice(), u.rows, u.cols);
    out
}

/// Discrete divergence, the negative adjoint of [`grad`].
pub fn divergence(p: &VectorField) -> ScalarField {
    let mut out = ScalarField::zeros_like(p);
    grad_t_add(p.as_slice(), out.as_mut_slice(), p.rows, p.cols, -1.0);
    out
}

/// Symmetrized gradient `(D1 v1, (D2 v1 + D1 v2)/2, (D2 v1 + D1 v2)/2, D2 v2)`.
pub fn symgrad(v: &VectorField) -> TensorField {
    let mut out = TensorField::zeros_like(v);
    let mut scratch = vec![0.0; v.pixels()];
    symgrad_into(v.as_slice(), out.as_mut_slice(), v.rows, v.cols, &mut scratch);
    out
}

pub fn symgrad_adjoint(q: &TensorField) -> VectorField {
    let mut out = VectorField::zeros_like(q);
    let mut scratch = vec![0.0; q.pixels()];
    symgrad_t_add(q.as_slice(), out.as_mut_slice(), q.rows, q.cols, 1.0, &mut scratch);
    out
}

/// Full Jacobian `(D1 v1, D2 v1, D1 v2, D2 v2)`.
pub fn jacobian(v: &VectorField) -> TensorField {
    let (m, n) = v.shape();
    let px = v.pixels();
    let mut out = TensorField::zeros_like(v);
    let src = v.as_slice();
    let dst = out.as_mut_slice();
    let (j11, rest) = dst.split_at_mut(px);
    let (j12, rest) = rest.split_at_mut(px);
    let (j21, j22) = rest.split_at_mut(px);
    d1_into(&src[..px], j11, m, n);
    d2_into(&src[..px], j12, m, n);
    d1_into(&src[px..], j21, m, n);
    d2_into(&src[px..], j22, m, n);
    out
}

/// Adjoint of [`jacobian`].
pub fn jacobian_adjoint(t: &TensorField) -> VectorField {
    let (m, n) = t.shape();
    let px = t.pixels();
    let mut out = VectorField::zeros_like(t);
    let src = t.as_slice();
    let (o1, o2) = out.as_mut_slice().split_at_mut(px);
    d1t_add(&src[..px], o1, m, n, 1.0);
    d2t_add(&src[px..2 * px], o1, m, n, 1.0);
    d1t_add(&src[2 * px..3 * px], o2, m, n, 1.0);
    d2t_add(&src[3 * px..], o2, m, n, 1.0);
    out
}

/// Discrete Hessian `E(grad u)`.
pub fn hessian(u: &ScalarField) -> TensorField {
    symgrad(&grad(u))
}

/// Per-pixel Euclidean magnitude across channels.
pub fn pointwise_magnitude<const C: usize>(x: &Grid<C>) -> ScalarField {
    let px = x.pixels();
    let data = (0..px).map(|idx| pixel_norm(x.as_slice(), px, C, idx)).collect();
    ScalarField {
        rows: x.rows,
        cols: x.cols,
        data,
    }
}

#[inline]
pub(crate) fn pixel_norm(data: &[f64], px: usize, channels: usize, idx: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..channels {
        let v = data[k * px + idx];
        acc += v * v;
    }
    acc.sqrt()
}

/// `sum_ij |x_ij|` on raw channel-major data.
pub(crate) fn mixed_l1_slice(data: &[f64], channels: usize) -> f64 {
    let px = data.len() / channels;
    (0..px).map(|idx| pixel_norm(data, px, channels, idx)).sum()
}

/// `max_ij |x_ij|` on raw channel-major data.
pub(crate) fn mixed_linf_slice(data: &[f64], channels: usize) -> f64 {
    let px = data.len() / channels;
    (0..px)
        .map(|idx| pixel_norm(data, px, channels, idx))
        .fold(0.0, f64::max)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `|||x|||_1`: sum of per-pixel Euclidean magnitudes.
pub fn mixed_norm_l1<const C: usize>(x: &Grid<C>) -> f64 {
    mixed_l1_slice(x.as_slice(), C)
}

/// `|||x|||_inf`: largest per-pixel Euclidean magnitude.
pub fn mixed_norm_linf<const C: usize>(x: &Grid<C>) -> f64 {
    mixed_linf_slice(x.as_slice(), C)
}

pub fn norm_l2<const C: usize>(x: &Grid<C>) -> f64 {
    norm2(x.as_slice())
}

/// Flat Euclidean inner product.
pub fn inner<const C: usize>(x: &Grid<C>, y: &Grid<C>) -> f64 {
    assert!(x.same_shape(y), "shape mismatch");
    dot(x.as_slice(), y.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random<const C: usize>(m: usize, n: usize, seed: u64) -> Grid<C> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid::from_fn(m, n, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        let u = ScalarField::from_fn(5, 7, |_, _, _| 0.3);
        assert!(d1_forward(&u).as_slice().iter().all(|&x| x == 0.0));
        assert!(d2_forward(&u).as_slice().iter().all(|&x| x == 0.0));
        assert!(grad(&u).as_slice().iter().all(|&x| x == 0.0));
        assert!(hessian(&u).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn column_forward_difference() {
        // 3x2 so the grid is valid; both columns carry (0, 1, 3).
        let u = ScalarField::from_vec(3, 2, vec![0.0, 0.0, 1.0, 1.0, 3.0, 3.0]).unwrap();
        let d = d1_forward(&u);
        assert_eq!(d.as_slice(), &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn d2_is_transposed_d1() {
        let u: ScalarField = random(6, 6, 1);
        assert_eq!(d2_forward(&u.transposed()), d1_forward(&u).transposed());
    }

    #[test]
    fn affine_field_has_constant_interior_gradient() {
        let (a, b) = (0.25, -0.5);
        let u = ScalarField::from_fn(6, 5, |i, j, _| a * i as f64 + b * j as f64);
        let g = grad(&u);
        for i in 0..5 {
            for j in 0..4 {
                assert!((g.get(i, j, 0) - a).abs() < 1e-14);
                assert!((g.get(i, j, 1) - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        for seed in 0..10 {
            let u: ScalarField = random(16, 13, seed);
            let p: VectorField = random(16, 13, seed + 100);
            let lhs = inner(&grad(&u), &p);
            let rhs = -inner(&u, &divergence(&p));
            assert!((lhs - rhs).abs() <= 1e-10 * norm_l2(&u) * norm_l2(&p));
        }
    }

    #[test]
    fn symgrad_adjoint_identity() {
        for seed in 0..10 {
            let v: VectorField = random(9, 16, seed);
            let q: TensorField = random(9, 16, seed + 7);
            let lhs = inner(&symgrad(&v), &q);
            let rhs = inner(&v, &symgrad_adjoint(&q));
            assert!((lhs - rhs).abs() <= 1e-10 * norm_l2(&v) * norm_l2(&q));
        }
    }

    #[test]
    fn symgrad_off_diagonal_channels_match() {
        let v: VectorField = random(7, 5, 3);
        let e = symgrad(&v);
        assert_eq!(e.channel(1), e.channel(2));
    }

    #[test]
    fn hessian_diagonal_matches_symgrad_of_grad() {
        let u: ScalarField = random(8, 8, 5);
        let h = hessian(&u);
        let e = symgrad(&grad(&u));
        assert_eq!(h, e);
        assert_eq!(h.channel(0), d1_forward(&d1_forward(&u)).as_slice());
        assert_eq!(h.channel(3), d2_forward(&d2_forward(&u)).as_slice());
    }

    #[test]
    fn jacobian_normal_operator_is_vector_laplacian() {
        let v: VectorField = random(10, 9, 11);
        let jtj = jacobian_adjoint(&jacobian(&v));
        let lap1 = divergence(&grad(&ScalarField::from_vec(10, 9, v.channel(0).to_vec()).unwrap()));
        let lap2 = divergence(&grad(&ScalarField::from_vec(10, 9, v.channel(1).to_vec()).unwrap()));
        for idx in 0..90 {
            assert!((jtj.channel(0)[idx] + lap1.as_slice()[idx]).abs() < 1e-12);
            assert!((jtj.channel(1)[idx] + lap2.as_slice()[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn magnitudes_and_norms() {
        let mut t = TensorField::zeros(2, 2);
        t.set(0, 0, 0, 3.0);
        t.set(0, 0, 3, 4.0);
        assert_eq!(pointwise_magnitude(&t).get(0, 0, 0), 5.0);
        let mut v = VectorField::zeros(2, 2);
        v.set(1, 1, 0, 3.0);
        v.set(1, 1, 1, 4.0);
        assert_eq!(mixed_norm_l1(&v), 5.0);
        assert_eq!(mixed_norm_l1(&VectorField::zeros(3, 3)), 0.0);
        let unit = VectorField::from_fn(3, 4, |i, j, k| {
            let th = (i * 4 + j) as f64;
            if k == 0 { th.cos() } else { th.sin() }
        });
        assert!(pointwise_magnitude(&unit).as_slice().iter().all(|m| (m - 1.0).abs() < 1e-15));
    }

    #[test]
    fn cauchy_schwarz() {
        for seed in 0..20 {
            let x: TensorField = random(4, 5, seed);
            let y: TensorField = random(4, 5, seed + 50);
            assert!(inner(&x, &y).abs() <= norm_l2(&x) * norm_l2(&y) + 1e-15);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ScalarField::try_zeros(1, 5), Err(GridError::Dimensions { .. })));
        assert!(matches!(
            VectorField::from_vec(2, 2, vec![0.0; 7]),
            Err(GridError::Length { expected: 8, actual: 7 })
        ));
        assert!(matches!(
            ScalarField::from_vec(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(GridError::NonFinite { index: 1 })
        ));
    }
}
