use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] wallinfer::Error),

    #[error("cannot load configuration {path}: {message}")]
    ConfigFile { path: String, message: String },

    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

/// Machine-readable failure report printed on stderr and, when possible, written to
/// the output directory.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl CliError {
    /// 2 configuration, 3 data or input, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(wallinfer::Error::Config(_)) | CliError::ConfigFile { .. } => 2,
            CliError::Lib(wallinfer::Error::Data(_)) | CliError::Lib(wallinfer::Error::Io { .. }) => 3,
            CliError::Output { .. } => 3,
            CliError::Lib(wallinfer::Error::Numerical(_)) => 4,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (kind, path) = match self {
            CliError::Lib(wallinfer::Error::Config(_)) => ("config", None),
            CliError::ConfigFile { path, .. } => ("config", Some(path.clone())),
            CliError::Lib(wallinfer::Error::Data(_)) => ("data", None),
            CliError::Lib(wallinfer::Error::Io { path, .. }) => ("io", Some(path.clone())),
            CliError::Output { path, .. } => ("io", Some(path.clone())),
            CliError::Lib(wallinfer::Error::Numerical(_)) => ("numerical", None),
        };
        ErrorReport {
            kind,
            exit_code: self.exit_code(),
            message: self.to_string(),
            path,
        }
    }
}
