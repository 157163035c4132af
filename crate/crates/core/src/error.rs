use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Snapshot of a least-squares run, attached to fit failures.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostic {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("outside the valid domain: {0}")]
    Domain(String),

    /// A quantity that diverges at the requested input (e.g. planar mirror limit).
    #[error("unbounded result: {0}")]
    Unbounded(String),

    #[error("fit did not converge after {} iterations (cost {:.3e})", .0.iterations, .0.cost)]
    NotConverged(Box<FitDiagnostic>),

    #[error("parameter {param} is not identifiable: {reason}")]
    Unidentifiable {
        param: &'static str,
        reason: String,
        best: Box<FitDiagnostic>,
    },

    #[error("spectrum grids do not overlap sufficiently: {0}")]
    GridMismatch(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }
}

/// Rejects non-finite or non-positive values.
pub(crate) fn ensure_positive(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn ensure_non_negative(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(field, format!("must be finite and >= 0, got {value}")))
    }
}

pub(crate) fn ensure_unit_interval(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::invalid(field, format!("must lie in [0, 1], got {value}")))
    }
}
