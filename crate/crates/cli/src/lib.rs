//! Experiment runner for the hybrid Parareal solver: configuration, serial
//! comparison, timing and CSV/JSON artifacts.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod compare;
pub mod config;
pub mod runner;
pub mod timing;

use std::path::PathBuf;

pub use compare::{compare_with_serial, Comparison};
pub use config::ExperimentConfig;
pub use runner::{run_experiment, RunOutcome};
pub use timing::{timing_harness, TimingStats};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] parareal_core::Error),
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => exit::CONFIG,
            RunError::Io { .. } => exit::IO,
            RunError::Shape(_) | RunError::Solver(_) => exit::NUMERICAL,
        }
    }
}
