//! Experiment runner: sweep specs, trial-parallel execution, CSV/JSON export
//! and scaling fits on top of `rename-core`.

pub mod fit;
pub mod spec;
pub mod sweep;

use rename_core::net::LogLevel;
use rename_core::trial::TrialError;

pub use fit::{fit_points, fit_scaling, FitReport, Model, Point};
pub use spec::{Cell, Scalar, SweepSpec};
pub use sweep::{run_sweep, CellSummary, SweepResult, TrialRecord};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Spec(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error("need at least {need} distinct (n, f) groups, have {have}")]
    InsufficientData { have: usize, need: usize },
}

pub const LOG_ENV: &str = "RENAME_SIM_LOG";

/// Event verbosity from `RENAME_SIM_LOG`; unset means `summary`.
pub fn log_level_from_env() -> Result<LogLevel, SimError> {
    match std::env::var(LOG_ENV) {
        Err(_) => Ok(LogLevel::Summary),
        Ok(v) => LogLevel::parse(&v).ok_or_else(|| SimError::Spec(format!("{LOG_ENV}={v:?}: expected off, summary or trace"))),
    }
}
