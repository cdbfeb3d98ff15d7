use thiserror::Error;

/// Errors raised by the solvers and their diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unbounded moment: {0}")]
    UnboundedMoment(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scheme failure at t = {t}: {reason}")]
    SchemeFailure { t: f64, reason: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
