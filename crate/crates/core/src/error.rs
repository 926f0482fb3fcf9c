use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("cumulative level {u} lies beyond the total mass {total} of the rate")]
    BeyondHorizon { u: f64, total: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("homogeneous only: {0}")]
    HomogeneousOnly(String),

    #[error("unsampleable rate: {0}")]
    Unsampleable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn check_time<T: crate::Scalar>(t: T) -> Result<()> {
    if t.is_nan() || t < T::zero() {
        Err(Error::NegativeTime(t.as_f64()))
    } else {
        Ok(())
    }
}
