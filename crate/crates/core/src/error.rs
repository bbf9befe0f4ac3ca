use thiserror::Error;

/// Errors raised by the inference library.
///
/// Variants are grouped by what the caller can do about them: fix the
/// configuration, fix the data, or adjust the numerical setup.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, grids, priors or other configuration values.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed or inconsistent input series.
    #[error("invalid data: {0}")]
    Data(String),

    /// A numerical routine failed (factorization, optimizer, sampler).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
