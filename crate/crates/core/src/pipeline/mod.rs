//! Prediction and correction levels and the executors that drive them.

mod config;
mod executor;
mod grid;
mod level;
mod trace;

use std::sync::Arc;

use thiserror::Error;

use crate::controller::ControlError;
use crate::problems::{IvpSystem, StepFault};
use crate::weights::StencilError;

pub use config::{default_window, ErrorEqnEstimate, Estimator, Mode, PipelineConfig};
pub use executor::{run_pipelined, run_pipelined_observed, run_serial, run_serial_observed};
pub use grid::{random_grid, uniform_grid, Node, PrevWindow, Record};
pub use level::MAX_CONSECUTIVE_REJECTS;
pub use trace::{LevelTrace, ProgressEvent, RunTrace, StepRecord};

/// Instrumentation hook called after every attempted step.
pub type Progress = Arc<dyn Fn(&ProgressEvent) + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("level {level}: {source}")]
    Fault { level: usize, source: StepFault },
    #[error("level {level}: {source}")]
    Stencil { level: usize, source: StencilError },
    #[error("level {level}: {source}")]
    Control { level: usize, source: ControlError },
    #[error("level {level}: {MAX_CONSECUTIVE_REJECTS} consecutive rejections at t = {t}")]
    Runaway { level: usize, t: f64 },
    #[error("level {level}: neighbouring worker stopped")]
    Disconnected { level: usize },
    #[error("no level can advance")]
    Deadlock,
}

/// Worker count requested through `RIDC_THREADS`, if set and valid.
pub fn thread_budget() -> Option<usize> {
    std::env::var("RIDC_THREADS").ok()?.trim().parse().ok()
}

/// Runs with the executor chosen by `RIDC_THREADS`: the serial executor when
/// it is 0 or smaller than the level count, the pipelined one otherwise
/// (including when unset).
pub fn execute(sys: &IvpSystem, cfg: &PipelineConfig) -> Result<RunTrace, RunError> {
    execute_observed(sys, cfg, None)
}

pub fn execute_observed(
    sys: &IvpSystem,
    cfg: &PipelineConfig,
    progress: Option<Progress>,
) -> Result<RunTrace, RunError> {
    match thread_budget() {
        Some(n) if n < cfg.levels => run_serial_observed(sys, cfg, progress),
        _ => run_pipelined_observed(sys, cfg, progress),
    }
}
