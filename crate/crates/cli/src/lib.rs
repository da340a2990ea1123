//! Experiment harness for the reduced-basis greedy algorithms: configuration,
//! orchestration, cost accounting, CSV output and the oracle checks behind
//! `rbx verify`.

pub mod config;
pub mod experiment;
pub mod output;
pub mod verify;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, run_methods, CostRatio, ExperimentReport, MethodResult, MethodSummary};
pub use verify::{verify, CheckOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(rbx_core::Error),
}

impl From<rbx_core::Error> for HarnessError {
    fn from(e: rbx_core::Error) -> Self {
        match e {
            rbx_core::Error::Config(msg) => Self::Config(msg),
            other => Self::Core(other),
        }
    }
}

impl HarnessError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}
