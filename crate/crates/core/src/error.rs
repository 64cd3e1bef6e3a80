use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("hyperbolicity violated: {0}")]
    Hyperbolicity(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("property check failed: {0}")]
    PropertyCheck(String),
    #[error("scale out of reach: {0}")]
    ScaleOutOfReach(String),
    #[error("CFL condition violated: {0}")]
    Cfl(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("quotient unbounded at this resolution: {0}")]
    QuotientUnbounded(String),
    #[error("outside the domain of dependence: {0}")]
    DomainOfDependence(String),
    #[error("noise amplification beyond floor: {0}")]
    NoiseFloor(String),
}

impl Error {
    /// True for failures caused by numerics rather than by bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Quadrature(_)
                | Error::ScaleOutOfReach(_)
                | Error::QuotientUnbounded(_)
                | Error::NoiseFloor(_)
                | Error::PropertyCheck(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
