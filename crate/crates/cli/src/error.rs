use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or missing configuration; `field` is the dotted config path.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("{0}")]
    Runtime(String),

    /// Some batch items failed, the rest were written.
    #[error("{failed} of {total} inputs failed")]
    PartialBatch { failed: usize, total: usize },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation { .. } => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(3),
            CliError::PartialBatch { .. } => ExitCode::from(4),
        }
    }
}

impl From<nvcavity::Error> for CliError {
    fn from(err: nvcavity::Error) -> Self {
        match err {
            nvcavity::Error::Validation { field, reason } => CliError::invalid(field, reason),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {err}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Runtime(format!("csv: {err}"))
    }
}

/// Prefixes the field of a core validation error with a config section.
pub trait InSection<T> {
    fn in_section(self, section: &str) -> CliResult<T>;
}

impl<T> InSection<T> for nvcavity::Result<T> {
    fn in_section(self, section: &str) -> CliResult<T> {
        self.map_err(|err| match err {
            nvcavity::Error::Validation { field, reason } => CliError::invalid(format!("{section}.{field}"), reason),
            other => other.into(),
        })
    }
}
