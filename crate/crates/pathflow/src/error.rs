//! Error types shared across the crate.
//!
//! Contract violations (dimension mismatches, parameters outside their
//! documented domain) panic; operational failures (bad config files,
//! unparsable data, diverging training, non-finite particles) surface as
//! [`Error`] values so the CLI can map them to exit codes.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: unknown key, missing value, constraint violation.
    #[error("configuration error: {0}")]
    Config(String),

    /// A data file could not be parsed. Rows and columns are 1-based and
    /// count the header row.
    #[error("{}: parse error at row {row}, column {col}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        msg: String,
    },

    /// The training loss became non-finite.
    #[error("training diverged at t={t}, step {step}: loss={loss}")]
    TrainingDivergence { t: f64, step: usize, loss: f64 },

    /// A particle update produced a non-finite position, or a run exceeded
    /// its hard iteration cap.
    #[error("sampler error at iteration {iteration}: {msg}")]
    Sampler { iteration: u64, msg: String },

    /// The operation is not defined for these inputs (e.g. a density grid
    /// over a multivariate path).
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration/parse problems,
    /// 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            _ => 3,
        }
    }
}
