use std::path::PathBuf;

use olc_core::{DynamicsError, OlcError};
use thiserror::Error;

/// Process exit codes. Stable; documented in the README.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const READ: i32 = 2;
    pub const SCHEMA: i32 = 3;
    pub const VALIDATION: i32 = 4;
    pub const SOLVER: i32 = 5;
    pub const DIVERGED: i32 = 6;
    pub const WRITE: i32 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed JSON: {message}")]
    Parse { path: String, message: String },
    #[error("no scenario file or built-in case named {0:?}")]
    CaseNotFound(String),
    #[error("{origin}: schema violation at `{field}`: {message}")]
    Schema { origin: String, field: String, message: String },
    #[error("{origin}: invalid network: {message}")]
    Validation { origin: String, message: String },
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("integration diverged at t = {t} s (non-finite state); try a smaller step")]
    Diverged { t: f64 },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::CaseNotFound(_) => exit::READ,
            CliError::Schema { .. } => exit::SCHEMA,
            CliError::Validation { .. } => exit::VALIDATION,
            CliError::Solver(_) => exit::SOLVER,
            CliError::Diverged { .. } => exit::DIVERGED,
            CliError::Write { .. } => exit::WRITE,
            CliError::ChecksFailed(_) => exit::CHECK_FAILED,
        }
    }

    pub(crate) fn schema(origin: &str, field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Schema {
            origin: origin.to_string(),
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn validation(origin: &str, message: impl ToString) -> Self {
        CliError::Validation {
            origin: origin.to_string(),
            message: message.to_string(),
        }
    }

    /// Maps an integration error. Configuration problems are schema errors.
    pub(crate) fn from_dynamics(origin: &str, e: DynamicsError) -> Self {
        match &e {
            &DynamicsError::Diverged { t } => CliError::Diverged { t },
            DynamicsError::NotAnEquilibrium(_) => CliError::Solver(e.to_string()),
            _ => CliError::schema(origin, "integrator", e),
        }
    }
}

impl From<OlcError> for CliError {
    fn from(e: OlcError) -> Self {
        CliError::Solver(e.to_string())
    }
}
