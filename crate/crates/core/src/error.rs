use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation (off-cone matrix,
    /// parameter out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input: shape mismatch, asymmetric entries, bad JSON, too few points.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A point that should lie in the cone by construction failed validation.
    /// Signals a linear-algebra breakdown rather than a bad argument.
    #[error("internal consistency error: {0}")]
    InternalConsistency(String),

    /// The pair handed to the inverse transform is not in its image.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A finite-difference step left the cone; retry with a smaller step.
    #[error("step size error: {0}")]
    StepSize(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Quadrature failed to converge, or a similar numerical breakdown.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("ill-posed: {0}")]
    IllPosed(String),

    /// Rejection sampler acceptance rate collapsed.
    #[error("practical failure: {0}")]
    PracticalFailure(String),
}

impl Error {
    /// True when the error is caused by the caller's input rather than by a
    /// numerical breakdown inside the library.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InvalidInput(_)
                | Error::OutOfRange(_)
                | Error::Unsupported(_)
                | Error::IllPosed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
