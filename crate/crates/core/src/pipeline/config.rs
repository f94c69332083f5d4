use serde::{Deserialize, Serialize};

use crate::controller::ControlParams;
use crate::problems::IvpSystem;

use super::RunError;

/// How level grids are produced and controlled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Equal steps on the predictor; correctors reuse its grid.
    Uniform,
    /// Seeded random steps with bounded step ratio; correctors reuse the grid.
    RandomGrid,
    /// Step-size control on the predictor only; correctors reuse its grid.
    AdaptivePred,
    /// Step doubling on every corrector level, each with its own grid.
    AdaptiveAll,
    /// Correctors are controlled by their own error-equation solution.
    AdaptiveErrorEqn,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Uniform,
        Mode::RandomGrid,
        Mode::AdaptivePred,
        Mode::AdaptiveAll,
        Mode::AdaptiveErrorEqn,
    ];

    /// Whether correctors step on the predictor's nodes.
    pub fn shared_grid(self) -> bool {
        matches!(self, Mode::Uniform | Mode::RandomGrid | Mode::AdaptivePred)
    }

    /// Whether the predictor runs under step-size control.
    pub fn adaptive_predictor(self) -> bool {
        !matches!(self, Mode::Uniform | Mode::RandomGrid)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Uniform => "uniform",
            Mode::RandomGrid => "random-grid",
            Mode::AdaptivePred => "adaptive-pred",
            Mode::AdaptiveAll => "adaptive-all",
            Mode::AdaptiveErrorEqn => "adaptive-error-eqn",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode '{s}'"))
    }
}

/// Local error estimator for the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    StepDoubling,
    HeunEuler,
    Bs32,
    Rkf45,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::StepDoubling,
        Estimator::HeunEuler,
        Estimator::Bs32,
        Estimator::Rkf45,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::StepDoubling => "step-doubling",
            Estimator::HeunEuler => "heun-euler",
            Estimator::Bs32 => "bs32",
            Estimator::Rkf45 => "rkf45",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Estimator::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown estimator '{s}'"))
    }
}

/// What the error-equation mode feeds to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorEqnEstimate {
    /// Change of `eta^[l] - eta^[l-1]` over the step, with both ends of the
    /// lower level read from the interpolant used by this step.
    #[default]
    Increment,
    /// `eta^[l]_n - eta^[l-1](t_n)` itself.
    Accumulated,
}

/// Run configuration. Field names double as the keys of the TOML config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Prediction level plus `levels - 1` corrections.
    pub levels: usize,
    pub mode: Mode,
    pub estimator: Estimator,
    /// Step count for uniform and random grids.
    pub steps: Option<usize>,
    /// Largest ratio between neighbouring random steps.
    pub omega: f64,
    pub seed: u64,
    /// Initial step; `(b - a) / 100` when absent.
    pub dt0: Option<f64>,
    /// Accepted predictor steps per segment; 0 disables resets.
    pub reset: usize,
    /// Per-level buffer and retention bound.
    pub window: Option<usize>,
    /// One entry per level, or a single entry used for every level.
    pub controls: Vec<ControlParams>,
    /// Controller order for error-equation correctors (defaults to the level).
    pub error_eqn_order: Option<u32>,
    pub error_eqn_estimate: ErrorEqnEstimate,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            mode: Mode::Uniform,
            estimator: Estimator::StepDoubling,
            steps: None,
            omega: 1.0,
            seed: 0,
            dt0: None,
            reset: 0,
            window: None,
            controls: vec![ControlParams::default()],
            error_eqn_order: None,
            error_eqn_estimate: ErrorEqnEstimate::Increment,
        }
    }
}

/// Default window: `max(2L + 2, 16)` on shared grids; 1024 when correctors
/// pick their own steps and may span many previous-level nodes.
pub fn default_window(levels: usize, mode: Mode) -> usize {
    if mode.shared_grid() {
        (2 * levels + 2).max(16)
    } else {
        1024
    }
}

impl PipelineConfig {
    pub fn uniform(levels: usize, steps: usize) -> Self {
        Self {
            levels,
            steps: Some(steps),
            ..Self::default()
        }
    }

    pub fn random_grid(levels: usize, steps: usize, omega: f64, seed: u64) -> Self {
        Self {
            levels,
            mode: Mode::RandomGrid,
            steps: Some(steps),
            omega,
            seed,
            ..Self::default()
        }
    }

    pub fn adaptive(levels: usize, mode: Mode, estimator: Estimator, controls: Vec<ControlParams>) -> Self {
        Self {
            levels,
            mode,
            estimator,
            controls,
            ..Self::default()
        }
    }

    pub fn window_size(&self) -> usize {
        self.window.unwrap_or_else(|| default_window(self.levels, self.mode))
    }

    /// Step count of a fixed grid.
    pub fn grid_steps(&self, sys: &IvpSystem) -> usize {
        match (self.steps, self.dt0) {
            (Some(n), _) => n,
            (None, Some(dt)) => ((sys.span() / dt).round() as usize).max(1),
            (None, None) => 100,
        }
    }

    pub fn initial_dt(&self, sys: &IvpSystem) -> f64 {
        self.dt0.unwrap_or(sys.span() / 100.0)
    }

    /// Control parameters for `level`, with step bounds resolved for `sys`.
    pub fn control(&self, level: usize, sys: &IvpSystem) -> ControlParams {
        let p = if self.controls.len() == 1 {
            self.controls[0]
        } else {
            self.controls[level]
        };
        p.bounded_to(sys.span())
    }

    pub fn validate(&self, sys: &IvpSystem) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Config(msg));
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.levels + 1 > crate::weights::MAX_STENCIL {
            return bad(format!(
                "at most {} levels are supported",
                crate::weights::MAX_STENCIL - 1
            ));
        }
        let window = self.window_size();
        if window < self.levels + 2 {
            return bad(format!("window {window} must be at least levels + 2"));
        }
        if self.mode == Mode::RandomGrid && !(self.omega >= 1.0 && self.omega.is_finite()) {
            return bad("omega must be a finite number >= 1".into());
        }
        if matches!(self.steps, Some(0)) {
            return bad("steps must be positive".into());
        }
        if let Some(dt) = self.dt0 {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("dt0 must be positive".into());
            }
        }
        if self.controls.len() != 1 && self.controls.len() != self.levels {
            return bad(format!(
                "expected 1 or {} control entries, got {}",
                self.levels,
                self.controls.len()
            ));
        }
        if self.error_eqn_order == Some(0) {
            return bad("error_eqn_order must be at least 1".into());
        }
        for level in 0..self.levels {
            self.control(level, sys)
                .validate()
                .map_err(|e| RunError::Config(format!("level {level}: {e}")))?;
        }
        Ok(())
    }
}
