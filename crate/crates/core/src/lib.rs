//! Total-variation-family image denoising.
//!
//! Discrete operators live in [`grid`] (matrix-free) and [`sparse`]
//! (assembled, with IC(0) preconditioners). [`prox`] holds the projections
//! and shrinkage maps, [`problems`] the saddle-point models and their
//! duality gaps, [`solvers`] the Chambolle-Pock and Douglas-Rachford
//! iterations, and [`pipeline`] the parameter-free defaults, the two-stage
//! gradient methods and the benchmark harness. [`cli`] backs the `tgvd`
//! binary.

pub mod cli;
pub mod error;
pub mod grid;
pub mod pipeline;
pub mod problems;
pub mod solvers;
pub mod prox;
pub mod sparse;

pub use error::{GridError, IoError, PipelineError, ProblemError, SolverError, SparseError};
pub use grid::{ScalarField, TensorField, VectorField};
pub use problems::{Problem, ProblemSpec, SaddlePointProblem, Variant};
pub use solvers::{solve, Algorithm, SolveReport, SolverConfig};
