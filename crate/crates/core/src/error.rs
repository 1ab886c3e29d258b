use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid must be at least 2x2, got {rows}x{cols}")]
    Dimensions { rows: usize, cols: usize },
    #[error("expected {expected} entries, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SparseError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("incomplete Cholesky breakdown: non-positive pivot {pivot:e} at row {row}")]
    Breakdown { row: usize, pivot: f64 },
    #[error("matrix must be square, got {nrows}x{ncols}")]
    NotSquare { nrows: usize, ncols: usize },
    #[error("missing diagonal entry in row {row}")]
    MissingDiagonal { row: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{variant} requires parameter `{name}`")]
    MissingParameter { variant: &'static str, name: &'static str },
    #[error("parameter `{name}` = {value} out of range: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("dual variable infeasible: norm {norm} exceeds bound {bound}")]
    InfeasibleDual { norm: f64, bound: f64 },
    #[error("state length {actual} does not match expected {expected}")]
    StateLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("step sizes violate tau*sigma*||K||^2 <= 1: tau*sigma*L^2 = {product:.6}")]
    StepSize { product: f64 },
    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("linear solve did not reach tolerance: relative residual {residual:e} after {iterations} iterations")]
    LinearSolve { residual: f64, iterations: usize },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("image too small for noise estimation: {rows}x{cols} (need at least 4x4)")]
    TooSmall { rows: usize, cols: usize },
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unsupported or malformed image: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Grid {
        path: PathBuf,
        #[source]
        source: GridError,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}
