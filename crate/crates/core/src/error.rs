use thiserror::Error;

/// Unified error type for the library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("matrix is not Hermitian: max |A - A^H| element = {deviation:.3e}")]
    NonHermitian { deviation: f64 },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("state has zero (or non-finite) norm")]
    ZeroNormState,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "step-size rule violated: dt * lambda * spread^2 = {value:.3e} exceeds {limit:.3e}; \
         reduce dt or split the run"
    )]
    StepSizeViolation { value: f64, limit: f64 },

    #[error(
        "lattice resolution too coarse: spacing {spacing:.3e} cm exceeds a/2 = {limit:.3e} cm"
    )]
    ResolutionViolation { spacing: f64, limit: f64 },

    #[error("collapse operators do not commute: max |[A_i, A_j]| = {deviation:.3e}")]
    NonCommuting { deviation: f64 },

    #[error("wavefunctions are not orthonormal on the shared grid: {0}")]
    NonOrthogonal(String),

    #[error("kernel is not admissible: {0}")]
    BadKernel(String),

    #[error("noise path incompatible with request: {0}")]
    BadNoisePath(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, CoreError>;
