use thiserror::Error;

/// Errors reported by the engine. Every variant is a domain error: the
/// caller asked for something outside the operation's contract.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("variable mismatch: expected `{expected}`, found `{found}`")]
    VariableMismatch { expected: String, found: String },

    #[error("invalid window [{lo}, {hi}] for `{var}`")]
    InvalidWindow { var: String, lo: i64, hi: i64 },

    #[error("insufficient orders: {0}")]
    InsufficientOrder(String),

    #[error("series is not invertible: {0}")]
    NotInvertible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state is not homogeneous: {0}")]
    NotHomogeneous(String),

    #[error("boundary state must lie in the weight-zero space: {0}")]
    BoundaryNotVacuum(String),

    #[error("direction state is not quasi-primary: {0}")]
    NotQuasiPrimary(String),

    #[error("singular Gram matrix at weight {weight}")]
    SingularGram { weight: u32 },

    #[error("matrix has an entry of zero moduli order; the Neumann series does not terminate")]
    NeumannDivergent,

    #[error("exponent {0} is not integral after assembly")]
    HalfIntegerExponent(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
