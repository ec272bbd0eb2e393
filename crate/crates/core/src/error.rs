use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature ran out of panels before meeting its tolerance.
    #[error(
        "integral did not converge: value {value:e}, error estimate {error:e}, tail estimate {tail:e}"
    )]
    Integration { value: f64, error: f64, tail: f64 },

    /// A moment table was asked for an absorption rate it does not cover.
    #[error("absorption rate {gamma:e} outside table range [{min:e}, {max:e}]")]
    Range { gamma: f64, min: f64, max: f64 },

    /// A scattering matrix has singular values above one, or QQ† is not in [0, 1].
    #[error("sub-unitarity violated: eigenvalue {0:e} of QQ† outside [0, 1]")]
    SubUnitarity(f64),

    /// Sampled moments cannot be continued past the sampled range.
    #[error("tail fit failed: {0}")]
    TailFit(String),

    /// A linear solve hit an exactly singular matrix.
    #[error("singular linear system")]
    Singular,

    /// A covariance matrix handed to the field synthesizer is not positive semidefinite.
    #[error("covariance not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
