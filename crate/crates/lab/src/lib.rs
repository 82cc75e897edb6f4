//! Experiment driver for `dmf-core`: scenario runs with CSV trajectories,
//! seed sweeps, the random-matrix validation suite, gradient checking and
//! plot-script emission. The `dmf-lab` binary is a thin layer over these
//! modules.

pub mod config;
pub mod gradcheck;
pub mod plots;
pub mod rmt;
pub mod scenario;
pub mod sweep;

use thiserror::Error;

pub use config::{Preset, RunConfig, TargetChoice};
pub use scenario::{run_scenario, RunOutput, RunStatus, RunSummary};
pub use sweep::{sweep_convergence, SweepResult};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dmf_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("run diverged at step {step}")]
    Diverged { step: u64 },
}

impl LabError {
    /// Process exit code: 1 config/usage, 2 diverged, 3 validation failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Diverged { .. } => 2,
            LabError::Validation(_) => 3,
            _ => 1,
        }
    }
}

pub type LabResult<T> = Result<T, LabError>;

/// Worker count from `LAB_THREADS`, falling back to rayon's default.
pub fn lab_threads() -> Option<usize> {
    std::env::var("LAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}
