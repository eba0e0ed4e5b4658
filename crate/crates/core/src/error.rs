use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("operator is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("Kraus set is not trace preserving (deviation {deviation:e})")]
    NotTracePreserving { deviation: f64 },
    #[error("density operator is invalid: {0}")]
    InvalidDensity(&'static str),
    #[error("no sign change of the bracketed function on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error("estimator {0} does not apply to this tally")]
    WrongVariant(&'static str),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Self {
        Error::OutOfDomain {
            name,
            value,
            domain,
        }
    }
}
