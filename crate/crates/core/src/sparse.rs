//! Assembled difference operators, Douglas-Rachford normal matrices
//! `I + st K^T K`, and zero-fill incomplete Cholesky preconditioners.
//!
//! Vectorization: pixel `(i, j)` maps to `i * N + j`; multi-channel fields
//! stack their channels, and primal blocks are stacked `u` first, then the
//! two channels of `v` (or `w`).

use std::path::Path;

use sprs::{CsMat, TriMat};

use crate::error::{GridError, SparseError};

/// Which primal block structure a saddle-point operator `K` acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// `x = u`, `K = grad`.
    U,
    /// `x = v` (or `w`), `K = E`.
    V,
    /// `x = (u, v)`, `K = [[grad, -I], [0, E]]`.
    UV,
    /// `x = (u, w)`, `K = [H, -E]` with `H = E grad`.
    UW,
}

impl Formulation {
    /// Length of the primal vector for an `m x n` grid.
    pub fn primal_len(self, m: usize, n: usize) -> usize {
        let px = m * n;
        match self {
            Formulation::U => px,
            Formulation::V => 2 * px,
            Formulation::UV | Formulation::UW => 3 * px,
        }
    }

    /// Preconditioner blocks in stacking order.
    pub fn precond_blocks(self) -> &'static [PrecondBlock] {
        match self {
            Formulation::U => &[PrecondBlock::UvU],
            Formulation::V => &[PrecondBlock::V],
            Formulation::UV => &[PrecondBlock::UvU, PrecondBlock::UvV],
            Formulation::UW => &[PrecondBlock::UwU, PrecondBlock::UwW],
        }
    }
}

/// Diagonal blocks of the block preconditioners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecondBlock {
    /// `I - st Lap` on `u`.
    UvU,
    /// `I + st (I + J^T J)` on `v`.
    UvV,
    /// `I + H^T H` on `u` (or `I + st H^T H`, see [`UwScaling`]).
    UwU,
    /// `I + st J^T J` on `w`.
    UwW,
    /// `I + st J^T J` on `v`.
    V,
}

/// How the `u` block of the `(u, w)` preconditioner is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UwScaling {
    /// `I + H^T H`, no step-size factor.
    #[default]
    Literal,
    /// `I + st H^T H`, matching the continuous operator block.
    Scaled,
}

/// Sparse matrix in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    mat: CsMat<f64>,
}

impl SparseOperator {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut tri = TriMat::new((nrows, ncols));
        for (r, c, v) in triplets {
            tri.add_triplet(r, c, v);
        }
        Self { mat: tri.to_csr() }
    }

    pub fn identity(n: usize) -> Self {
        Self { mat: CsMat::eye(n) }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            mat: CsMat::zero((nrows, ncols)),
        }
    }

    fn wrap(mat: CsMat<f64>) -> Self {
        let mat = if mat.is_csr() { mat } else { mat.to_csr() };
        Self { mat }
    }

    pub fn nrows(&self) -> usize {
        self.mat.rows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.cols()
    }

    pub fn nnz(&self) -> usize {
        self.mat.nnz()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.mat.get(row, col).copied().unwrap_or(0.0)
    }

    pub fn inner(&self) -> &CsMat<f64> {
        &self.mat
    }

    /// Row-wise `(col, value)` entries in column order.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.mat.indptr().outer_inds_sz(row);
        self.mat.indices()[range.clone()]
            .iter()
            .copied()
            .zip(self.mat.data()[range].iter().copied())
    }

    pub fn transpose(&self) -> Self {
        Self::wrap(self.mat.transpose_view().to_csr())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        Self::wrap(&self.mat * &other.mat)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::wrap(&self.mat + &other.mat)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            mat: self.mat.map(|&x| s * x),
        }
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols());
        assert_eq!(y.len(), self.nrows());
        let indptr = self.mat.indptr();
        let indptr = indptr.to_proper();
        let indices = self.mat.indices();
        let data = self.mat.data();
        for (row, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in indptr[row]..indptr[row + 1] {
                acc += data[k] * x[indices[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Lower triangle including the diagonal.
    pub fn lower(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows() {
            trip.extend(self.row(r).filter(|&(c, _)| c <= r).map(|(c, v)| (r, c, v)));
        }
        Self::from_triplets(self.nrows(), self.ncols(), trip)
    }

    /// Dense row-major copy; intended for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        out
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let diff = self.add(&other.scale(-1.0));
        diff.mat.data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Dumps the matrix in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        sprs::io::write_matrix_market(path, self.mat.view())
    }
}

fn block(blocks: &[Vec<Option<&SparseOperator>>]) -> SparseOperator {
    let views: Vec<Vec<_>> = blocks
        .iter()
        .map(|row| row.iter().map(|b| b.map(|m| m.mat.view())).collect())
        .collect();
    SparseOperator::wrap(sprs::bmat(&views))
}

/// Assembly works on any non-empty grid, including single rows or columns.
fn check_dims(m: usize, n: usize) -> Result<(), SparseError> {
    if m == 0 || n == 0 {
        Err(GridError::Dimensions { rows: m, cols: n }.into())
    } else {
        Ok(())
    }
}

/// Forward difference `D1` (direction 1, along rows) or `D2` (direction 2).
pub fn assemble_d(direction: u8, m: usize, n: usize) -> Result<SparseOperator, SparseError> {
    check_dims(m, n)?;
    let px = m * n;
    let mut trip = Vec::with_capacity(2 * px);
    for i in 0..m {
        for j in 0..n {
            let row = i * n + j;
            let next = match direction {
                1 if i + 1 < m => Some(row + n),
                2 if j + 1 < n => Some(row + 1),
                1 | 2 => None,
                _ => panic!("direction must be 1 or 2"),
            };
            if let Some(next) = next {
                trip.push((row, row, -1.0));
                trip.push((row, next, 1.0));
            }
        }
    }
    Ok(SparseOperator::from_triplets(px, px, trip))
}

/// Collection of the assembled building blocks for one grid size.
#[derive(Debug, Clone)]
pub struct DifferenceMatrices {
    pub d1: SparseOperator,
    pub d2: SparseOperator,
    rows: usize,
    cols: usize,
}

impl DifferenceMatrices {
    pub fn new(m: usize, n: usize) -> Result<Self, SparseError> {
        Ok(Self {
            d1: assemble_d(1, m, n)?,
            d2: assemble_d(2, m, n)?,
            rows: m,
            cols: n,
        })
    }

    fn px(&self) -> usize {
        self.rows * self.cols
    }

    /// `grad = [D1; D2]`.
    pub fn grad(&self) -> SparseOperator {
        block(&[vec![Some(&self.d1)], vec![Some(&self.d2)]])
    }

    /// `E = [[D1, 0], [D2/2, D1/2], [D2/2, D1/2], [0, D2]]`.
    pub fn symgrad(&self) -> SparseOperator {
        let h1 = self.d1.scale(0.5);
        let h2 = self.d2.scale(0.5);
        block(&[
            vec![Some(&self.d1), None],
            vec![Some(&h2), Some(&h1)],
            vec![Some(&h2), Some(&h1)],
            vec![None, Some(&self.d2)],
        ])
    }

    /// `J = [[D1, 0], [D2, 0], [0, D1], [0, D2]]`.
    pub fn jacobian(&self) -> SparseOperator {
        block(&[
            vec![Some(&self.d1), None],
            vec![Some(&self.d2), None],
            vec![None, Some(&self.d1)],
            vec![None, Some(&self.d2)],
        ])
    }

    /// `H = [D1^2; D1 D2; D1 D2; D2^2]`.
    pub fn hessian(&self) -> SparseOperator {
        let d11 = self.d1.matmul(&self.d1);
        let d12 = self.d1.matmul(&self.d2);
        let d22 = self.d2.matmul(&self.d2);
        block(&[vec![Some(&d11)], vec![Some(&d12)], vec![Some(&d12)], vec![Some(&d22)]])
    }

    /// Negative Laplacian `D1^T D1 + D2^T D2`.
    pub fn neg_laplacian(&self) -> SparseOperator {
        self.d1
            .transpose()
            .matmul(&self.d1)
            .add(&self.d2.transpose().matmul(&self.d2))
    }

    /// Saddle-point operator `K` for a formulation.
    pub fn k(&self, formulation: Formulation) -> SparseOperator {
        match formulation {
            Formulation::U => self.grad(),
            Formulation::V => self.symgrad(),
            Formulation::UV => {
                let minus_i = SparseOperator::identity(2 * self.px()).scale(-1.0);
                let g = self.grad();
                let e = self.symgrad();
                block(&[vec![Some(&g), Some(&minus_i)], vec![None, Some(&e)]])
            }
            Formulation::UW => {
                let h = self.hessian();
                let minus_e = self.symgrad().scale(-1.0);
                block(&[vec![Some(&h), Some(&minus_e)]])
            }
        }
    }

    pub fn ktk(&self, formulation: Formulation, st: f64) -> SparseOperator {
        let k = self.k(formulation);
        let ktk = k.transpose().matmul(&k);
        SparseOperator::identity(ktk.nrows()).add(&ktk.scale(st))
    }

    pub fn precond_target(&self, kind: PrecondBlock, st: f64, uw: UwScaling) -> SparseOperator {
        let px = self.px();
        let lap = self.neg_laplacian();
        let jtj = || {
            block(&[vec![Some(&lap), None], vec![None, Some(&lap)]])
        };
        match kind {
            PrecondBlock::UvU => SparseOperator::identity(px).add(&lap.scale(st)),
            PrecondBlock::UvV => {
                let inner = SparseOperator::identity(2 * px).add(&jtj());
                SparseOperator::identity(2 * px).add(&inner.scale(st))
            }
            PrecondBlock::UwU => {
                let h = self.hessian();
                let hth = h.transpose().matmul(&h);
                let scale = match uw {
                    UwScaling::Literal => 1.0,
                    UwScaling::Scaled => st,
                };
                SparseOperator::identity(px).add(&hth.scale(scale))
            }
            PrecondBlock::UwW | PrecondBlock::V => {
                SparseOperator::identity(2 * px).add(&jtj().scale(st))
            }
        }
    }
}

/// `I + st K^T K` for a formulation on an `m x n` grid.
pub fn assemble_ktk(
    formulation: Formulation,
    m: usize,
    n: usize,
    st: f64,
) -> Result<SparseOperator, SparseError> {
    assert!(st > 0.0, "st must be positive");
    Ok(DifferenceMatrices::new(m, n)?.ktk(formulation, st))
}

/// The matrix handed to incomplete Cholesky for one preconditioner block.
pub fn assemble_precond_target(
    kind: PrecondBlock,
    m: usize,
    n: usize,
    st: f64,
    uw: UwScaling,
) -> Result<SparseOperator, SparseError> {
    Ok(DifferenceMatrices::new(m, n)?.precond_target(kind, st, uw))
}

// ---------------------------------------------------------------------------
// Linear operators and preconditioners.

/// Square linear map `x -> A x`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }
}

/// Approximate inverse `r -> M r` with `M^{-1} ~ A`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], out: &mut [f64]);
}

/// `M = I`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        out.copy_from_slice(r);
    }
}

/// Lower-triangular factor `L` with `L L^T ~ A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    shift: f64,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Diagonal shift that was added to `A` before factorization succeeded.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_operator(&self) -> SparseOperator {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                trip.push((r, self.indices[k], self.values[k]));
            }
        }
        SparseOperator::from_triplets(self.n, self.n, trip)
    }

    /// Solves `L L^T x = r` by forward and back substitution.
    pub fn solve_into(&self, r: &[f64], x: &mut [f64]) {
        assert_eq!(r.len(), self.n);
        x.copy_from_slice(r);
        // L y = r; the diagonal is the last entry of each row.
        for row in 0..self.n {
            let (start, end) = (self.indptr[row], self.indptr[row + 1]);
            let mut acc = x[row];
            for k in start..end - 1 {
                acc -= self.values[k] * x[self.indices[k]];
            }
            x[row] = acc / self.values[end - 1];
        }
        // L^T x = y, scattering each finished row into earlier unknowns.
        for row in (0..self.n).rev() {
            let (start, end) = (self.indptr[row], self.indptr[row + 1]);
            x[row] /= self.values[end - 1];
            let xi = x[row];
            for k in start..end - 1 {
                x[self.indices[k]] -= self.values[k] * xi;
            }
        }
    }
}

impl Preconditioner for CholFactor {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        self.solve_into(r, out)
    }
}

/// Zero-fill incomplete Cholesky: `L` keeps exactly the pattern of
/// `lower(A)` and matches `A` on that pattern.
pub fn ichol_zero_fill(a: &SparseOperator) -> Result<CholFactor, SparseError> {
    ichol_shifted(a, 0.0)
}

fn ichol_shifted(a: &SparseOperator, shift: f64) -> Result<CholFactor, SparseError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SparseError::NotSquare {
            nrows: n,
            ncols: a.ncols(),
        });
    }
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for r in 0..n {
        let mut has_diag = false;
        for (c, v) in a.row(r).filter(|&(c, _)| c <= r) {
            indices.push(c);
            values.push(if c == r {
                has_diag = true;
                v + shift
            } else {
                v
            });
        }
        if !has_diag {
            return Err(SparseError::MissingDiagonal { row: r });
        }
        indptr.push(indices.len());
    }

    for i in 0..n {
        let (start, end) = (indptr[i], indptr[i + 1]);
        for pos in start..end {
            let k = indices[pos];
            // sum_{j < k} L_ij L_kj over the shared pattern
            let mut acc = 0.0;
            let (mut a_pos, mut b_pos) = (start, indptr[k]);
            let b_end = indptr[k + 1] - 1;
            while a_pos < pos && b_pos < b_end {
                match indices[a_pos].cmp(&indices[b_pos]) {
                    std::cmp::Ordering::Less => a_pos += 1,
                    std::cmp::Ordering::Greater => b_pos += 1,
                    std::cmp::Ordering::Equal => {
                        acc += values[a_pos] * values[b_pos];
                        a_pos += 1;
                        b_pos += 1;
                    }
                }
            }
            if k < i {
                let diag_k = values[indptr[k + 1] - 1];
                values[pos] = (values[pos] - acc) / diag_k;
            } else {
                let pivot = values[pos] - acc;
                if !(pivot > 0.0) || !pivot.is_finite() {
                    return Err(SparseError::Breakdown { row: i, pivot });
                }
                values[pos] = pivot.sqrt();
            }
        }
    }
    Ok(CholFactor {
        n,
        indptr,
        indices,
        values,
        shift,
    })
}

/// IC(0), retrying with a diagonal shift `1e-3 * max(diag)` (doubled on
/// each further breakdown) when the plain factorization breaks down.
pub fn ichol_with_fallback(a: &SparseOperator) -> Result<CholFactor, SparseError> {
    match ichol_zero_fill(a) {
        Ok(f) => Ok(f),
        Err(SparseError::Breakdown { row, pivot }) => {
            let max_diag = (0..a.nrows()).map(|r| a.get(r, r)).fold(0.0, f64::max);
            let mut shift = 1e-3 * max_diag;
            for _ in 0..60 {
                match ichol_shifted(a, shift) {
                    Ok(f) => {
                        log::debug!("IC(0) broke down at row {row} (pivot {pivot:e}); used shift {shift:e}");
                        return Ok(f);
                    }
                    Err(SparseError::Breakdown { .. }) => shift *= 2.0,
                    Err(e) => return Err(e),
                }
            }
            Err(SparseError::Breakdown { row, pivot })
        }
        Err(e) => Err(e),
    }
}

/// Block-diagonal preconditioner with an IC(0) factor per block.
#[derive(Debug, Clone)]
pub struct BlockPreconditioner {
    blocks: Vec<(usize, CholFactor)>,
    dim: usize,
}

impl BlockPreconditioner {
    pub fn new(factors: Vec<CholFactor>) -> Self {
        let mut offset = 0;
        let blocks = factors
            .into_iter()
            .map(|f| {
                let start = offset;
                offset += f.dim();
                (start, f)
            })
            .collect();
        Self { blocks, dim: offset }
    }

    /// Factorizes every block of the formulation's block-diagonal preconditioner.
    pub fn for_formulation(
        formulation: Formulation,
        m: usize,
        n: usize,
        st: f64,
        uw: UwScaling,
    ) -> Result<Self, SparseError> {
        let mats = DifferenceMatrices::new(m, n)?;
        let factors = formulation
            .precond_blocks()
            .iter()
            .map(|&kind| ichol_with_fallback(&mats.precond_target(kind, st, uw)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(factors))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factors(&self) -> impl Iterator<Item = &CholFactor> {
        self.blocks.iter().map(|(_, f)| f)
    }
}

impl Preconditioner for BlockPreconditioner {
    fn apply(&self, r: &[f64], out: &mut [f64]) {
        for (offset, f) in &self.blocks {
            let range = *offset..offset + f.dim();
            f.solve_into(&r[range.clone()], &mut out[range]);
        }
    }
}
