//! Step-size selection from a local error estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid control parameters: {0}")]
    Params(String),
    #[error("mismatched vector lengths ({0}, {1}, {2})")]
    Length(usize, usize, usize),
    #[error("step size {0} must be positive and finite")]
    Step(f64),
    #[error("controller order must be at least 1")]
    Order,
}

/// Tolerances and limits for one level.
///
/// `dt_min`/`dt_max` default to "unbounded"; the pipeline replaces unbounded
/// limits with `(b - a) * 1e-10` and `b - a` for the problem being solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    pub atol: f64,
    pub rtol: f64,
    /// Safety factor applied to every proposal.
    pub safety: f64,
    /// Largest factor by which a step may grow or shrink.
    pub max_change: f64,
    /// Lower bound on the scaled error before taking the root.
    pub eps_floor: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self::new(1e-6, 1e-3)
    }
}

impl ControlParams {
    pub fn new(atol: f64, rtol: f64) -> Self {
        Self {
            atol,
            rtol,
            safety: 0.9,
            max_change: 10.0,
            eps_floor: 1e-10,
            dt_min: f64::MIN_POSITIVE,
            dt_max: f64::INFINITY,
        }
    }

    pub fn with_step_bounds(mut self, dt_min: f64, dt_max: f64) -> Self {
        self.dt_min = dt_min;
        self.dt_max = dt_max;
        self
    }

    /// Fills unbounded step limits with the defaults for an interval of length `span`.
    pub fn bounded_to(mut self, span: f64) -> Self {
        if self.dt_min == f64::MIN_POSITIVE {
            self.dt_min = span * 1e-10;
        }
        if self.dt_max == f64::INFINITY {
            self.dt_max = span;
        }
        self
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |msg: &str| Err(ControlError::Params(msg.to_string()));
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return bad("safety factor must lie in (0, 1)");
        }
        if !(self.max_change > 1.0) || !self.max_change.is_finite() {
            return bad("max change must be a finite number above 1");
        }
        if !(self.atol >= 0.0 && self.rtol >= 0.0 && self.atol + self.rtol > 0.0) {
            return bad("tolerances must be non-negative and not both zero");
        }
        if !self.atol.is_finite() || !self.rtol.is_finite() {
            return bad("tolerances must be finite");
        }
        if !(self.eps_floor > 0.0) {
            return bad("error floor must be positive");
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return bad("step bounds must satisfy 0 < dt_min <= dt_max");
        }
        Ok(())
    }
}

/// Outcome of one control decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDecision {
    pub accept: bool,
    /// Scaled RMS error; infinite when the estimate was not finite.
    pub eps: f64,
    pub dt_new: f64,
}

/// Scaled RMS norm of `err` against `atol + rtol * max(|y_n|, |y_next|)`.
pub fn scaled_error(y_n: &[f64], y_next: &[f64], err: &[f64], params: &ControlParams) -> f64 {
    let sum: f64 = y_n
        .iter()
        .zip(y_next)
        .zip(err)
        .map(|((a, b), e)| {
            let tau = params.atol + params.rtol * a.abs().max(b.abs());
            (e / tau).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

/// Accepts the step when the scaled error is at most one and proposes the
/// next step size:
///
/// `dt_opt = dt * (1 / eps)^(1/(p+1))`, then
/// `alpha * min(dt, max(dt_opt, dt/beta))` after a rejection and
/// `alpha * min(beta*dt, max(dt_opt, dt/beta))` otherwise, clamped to
/// `[dt_min, dt_max]`.
pub fn select_step(
    y_n: &[f64],
    y_next: &[f64],
    err: &[f64],
    order: u32,
    dt: f64,
    prev_rejected: bool,
    params: &ControlParams,
) -> Result<ControlDecision, ControlError> {
    params.validate()?;
    if y_n.len() != y_next.len() || y_n.len() != err.len() || err.is_empty() {
        return Err(ControlError::Length(y_n.len(), y_next.len(), err.len()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ControlError::Step(dt));
    }
    if order == 0 {
        return Err(ControlError::Order);
    }
    let (alpha, beta) = (params.safety, params.max_change);
    let clamp = |v: f64| v.clamp(params.dt_min, params.dt_max);

    let eps = scaled_error(y_n, y_next, err, params);
    if !eps.is_finite() {
        return Ok(ControlDecision {
            accept: false,
            eps: f64::INFINITY,
            dt_new: clamp(dt / beta * alpha),
        });
    }
    let dt_opt = dt * (1.0 / eps.max(params.eps_floor)).powf(1.0 / (order as f64 + 1.0));
    let grow_cap = if prev_rejected { dt } else { beta * dt };
    let dt_new = alpha * grow_cap.min(dt_opt.max(dt / beta));
    Ok(ControlDecision {
        accept: eps <= 1.0,
        eps,
        dt_new: clamp(dt_new),
    })
}
