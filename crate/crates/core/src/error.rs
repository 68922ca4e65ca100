use thiserror::Error;

/// Errors raised by the numerical kernels and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("grid mismatch between fields")]
    GridMismatch,

    #[error("invalid exponent p = {0}")]
    InvalidExponent(f64),

    #[error("matrix is not Hermitian (relative drift {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("operator norm {0} exceeds 1")]
    NotContraction(f64),

    #[error("interval endpoint {0} is not on the grid")]
    OffGrid(String),

    #[error("interval does not meet the window")]
    EmptyIntersection,

    #[error("interval {0} is not contained in the window")]
    OutsideWindow(String),

    #[error("half-plane height must be positive, got {0}")]
    NonPositiveHeight(f64),

    #[error("invalid truncation: {0}")]
    Truncation(String),

    #[error("filtration level {level} is finer than the grid resolution {resolution}")]
    LevelTooFine { level: i32, resolution: i32 },

    #[error("invalid level range {0}..={1}")]
    InvalidRange(i32, i32),

    #[error("field has nonzero mean (norm {0:e})")]
    NonzeroMean(f64),

    #[error("non-positive window ({0}, {1})")]
    NonPositiveWindow(String, String),

    #[error("empty family")]
    EmptyFamily,

    #[error("input values do not commute")]
    NonCommuting,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error("bound [{0}, {1}] is not ordered")]
    UnorderedBound(f64, f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rational overflow")]
    Overflow,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
