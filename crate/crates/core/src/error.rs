use std::path::PathBuf;

use thiserror::Error;

/// Failure raised by a vector field evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    /// The state sits on a singularity of the field (e.g. a division by |x| with |x| ~ 0).
    #[error("singular state: modulus {modulus:e} below threshold {threshold:e}")]
    SingularState { modulus: f64, threshold: f64 },
}

/// Failure of a single integrator step.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("non-finite value {value} in component {component}")]
    NonFinite { component: usize, value: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown system '{name}' (valid: {valid})")]
    UnknownSystem { name: String, valid: String },

    #[error("unknown kernel '{name}' (valid: {valid})")]
    UnknownKernel { name: String, valid: String },

    #[error("unknown method '{0}' (valid: dns, mshmm, flavors, vshmm)")]
    UnknownMethod(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("numeric failure in {method} at t = {time} (step {step}): {source}")]
    NumericFailure {
        method: String,
        time: f64,
        step: u64,
        #[source]
        source: StepError,
    },

    #[error("order fit needs at least 3 usable rows, got {0}")]
    InsufficientRows(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericFailure { .. } => 3,
            Error::UnknownSystem { .. }
            | Error::UnknownKernel { .. }
            | Error::UnknownMethod(_)
            | Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::Json(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
