use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("fractional order s out of range (0, 1): {0}")]
    SOutOfRange(f64),

    #[error("exponent p out of range (1, inf): {0}")]
    POutOfRange(f64),

    #[error("mass matrix is not positive definite")]
    MassNotPositiveDefinite,

    #[error("eigenvalue index k = {k} out of range (expected {lo} <= k <= {hi})")]
    KOutOfRange { k: usize, lo: usize, hi: usize },

    #[error("point (a, b) = ({a}, {b}) lies outside the square ({lo}, {hi})^2")]
    PointOutsideSquare { a: f64, b: f64, lo: f64, hi: f64 },

    #[error("input vector is not orthogonal to the first eigenfunction (defect {0:.3e})")]
    NotOrthogonal(f64),

    #[error("zero or near-zero input where a nontrivial function is required")]
    ZeroInput,

    #[error("denominator vanishes (function has no positive/negative part where required)")]
    ZeroDenominator,

    #[error("{op} did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence {
        op: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("curve leaves the square for this a: no sign change of {which} in the bracket")]
    OutOfSquare { which: &'static str },

    #[error("mountain-pass path collapsed to the low sublevel set (t outside admissible range?)")]
    PathCollapse,

    #[error("minimizer changes sign: discretization or solver failure")]
    SignChangingMinimizer,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
