//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("projective point has all coordinates zero")]
    AllZero,

    #[error("factorization budget exceeded while factoring {0}")]
    FactorizationBudgetExceeded(String),

    #[error("bounded-height enumeration would exceed the point cap: {0}")]
    BoundTooLarge(String),

    #[error("point outside the map domain: {0}")]
    DomainViolation(String),

    #[error("degenerate image: all coordinate forms vanish at {0}")]
    DegenerateImage(String),

    #[error("composed degree {got} exceeds the cap {cap}")]
    DegreeOverflow { got: u128, cap: u128 },

    #[error("cannot certify precision {precision}: {reason}")]
    PrecisionUnreachable { precision: f64, reason: String },

    #[error("orbit trace too short: need at least {need} states, have {have}")]
    InsufficientTrace { need: usize, have: usize },

    #[error("no eigendivisor decomposition available: {0}")]
    MissingDecomposition(String),

    #[error("fan is not complete: {0}")]
    NotComplete(String),

    #[error("lattice map incompatible with the fan: {0}")]
    IncompatibleEndo(String),

    #[error("pullback does not permute the extremal nef classes: {0}")]
    NotPermutation(String),

    #[error("divisor is not nef: wall pairing negative at {0}")]
    NotNef(String),

    #[error("divisor polytope has no lattice points")]
    EmptyPolytope,

    #[error("induced base map conjugacy check failed: {0}")]
    ConjugacyFailure(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("at iterate {index}: {source}")]
    AtIterate { index: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the orbit index at which it occurred.
    pub fn at_iterate(self, index: usize) -> Error {
        Error::AtIterate {
            index,
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI contract: configuration and runtime
    /// failures map to 2.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
