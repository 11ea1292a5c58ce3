use std::io;

use thiserror::Error;

use crate::diagnostics::IterationRecord;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("column {index} is zero")]
    ZeroColumn { index: usize },

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("Jacobi SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize, values: Vec<f64> },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero diagonal entry at row {row} in Jacobi preconditioner")]
    ZeroDiagonal { row: usize },

    #[error("near-singular triangular factor at column {column}")]
    SingularTriangular { column: usize },

    #[error("non-finite iterate at block step {outer}")]
    NonFiniteIterate {
        outer: usize,
        records: Vec<IterationRecord>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
