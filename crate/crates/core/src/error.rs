use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by callers to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad inputs: parameter ranges, shape mismatches, empty data.
    Validation,
    /// The computation itself broke down (ill-conditioning, degeneracy).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("point {0} outside the curve range [{1}, {2}]")]
    OutOfRange(f64, f64, f64),

    #[error("Cholesky factorization failed after jitter escalation")]
    CholeskyFailure,

    #[error("rank-deficient least-squares design ({0})")]
    RankDeficient(&'static str),

    #[error("degenerate density draw: normalizing constant {0}")]
    DegenerateDensity(f64),

    #[error("rejection sampler acceptance rate {rate:.2e} below floor after {proposals} proposals")]
    LowAcceptance { rate: f64, proposals: u64 },

    #[error("simulation {index} failed after {attempts} attempts: {source}")]
    RetriesExhausted {
        index: usize,
        attempts: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("all acceptance weights are zero (every accepted divergence equals the threshold)")]
    ZeroWeights,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParameter(_)
            | Error::LengthMismatch { .. }
            | Error::NonFinite(_)
            | Error::EmptyInput(_)
            | Error::OutOfRange(..) => ErrorCategory::Validation,
            Error::CholeskyFailure
            | Error::RankDeficient(_)
            | Error::DegenerateDensity(_)
            | Error::LowAcceptance { .. }
            | Error::ZeroWeights => ErrorCategory::Numerical,
            Error::RetriesExhausted { source, .. } => source.category(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
