use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input data.
    InvalidData(String),
    /// Invalid hyperparameter or configuration value.
    InvalidConfig(String),
    /// A draw or intermediate quantity became non-finite.
    Numerical { step: &'static str, detail: String },
    UnknownItem(String),
    /// A factorization failed even after jitter escalation.
    NotPositiveDefinite(&'static str),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::InvalidData(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub fn numerical(step: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical { step, detail: detail.into() }
    }

    /// `true` for errors that stem from the inputs rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidData(_) | Error::InvalidConfig(_) | Error::UnknownItem(_))
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidData(m) => write!(f, "invalid data: {m}"),
            Error::InvalidConfig(m) => write!(f, "invalid configuration: {m}"),
            Error::Numerical { step, detail } => write!(f, "numerical failure in {step}: {detail}"),
            Error::UnknownItem(id) => write!(f, "unknown item {id:?}"),
            Error::NotPositiveDefinite(what) => write!(f, "matrix not positive definite: {what}"),
        }
    }
}

impl core::error::Error for Error {}
