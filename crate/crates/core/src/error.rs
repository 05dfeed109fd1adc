use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient matrix [[c1, c3], [c3, c2]] is not positive definite")]
    NotPositiveDefinite,

    #[error("degenerate triangle {0} (area {1:e})")]
    DegenerateTriangle(usize, f64),

    #[error("zero diagonal entry in row {0}")]
    ZeroDiagonal(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric: entry ({0}, {1})")]
    NotSymmetric(usize, usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("missing coordinates")]
    MissingCoordinates,

    #[error("zero-norm test vector row {0}")]
    ZeroNorm(usize),

    #[error("empty semivariogram: {0}")]
    EmptySemivariogram(String),

    #[error("preconditioner is not positive definite (z^T r = {0:e})")]
    IndefinitePreconditioner(f64),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
