//! Error metrics, convergence and adaptivity studies, CSV output and the CLI.

pub mod cli;
mod csv_io;

use std::path::PathBuf;

use thiserror::Error;

use crate::controller::ControlParams;
use crate::pipeline::{execute, Mode, PipelineConfig, RunError, RunTrace};
use crate::problems::{IvpSystem, ProblemError, ReferenceSolution};

pub use csv_io::{
    read_convergence_csv, read_study_csv, read_trace_csv, trace_rows, write_convergence_csv, write_study_csv,
    write_trace_csv, TraceRow,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("reference undefined at t = {0}")]
    NoReference(f64),
    #[error("invalid study: {0}")]
    Spec(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv: {0}")]
    Parse(String),
}

/// Euclidean norm of `value - reference`.
pub fn final_error(value: &[f64], reference: &[f64]) -> f64 {
    value
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Final error of every level against the reference at `b`.
pub fn level_errors(
    trace: &RunTrace,
    sys: &IvpSystem,
    reference: &ReferenceSolution,
) -> Result<Vec<f64>, HarnessError> {
    let exact = reference.at(sys.end())?.ok_or(HarnessError::NoReference(sys.end()))?;
    Ok(trace
        .levels
        .iter()
        .map(|l| final_error(&l.final_value, &exact))
        .collect())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `(rtol, atol)` pairs with `rtol = 10^e` for `e` from `first` down to
/// `last` in steps of `-step`, and `atol = rtol * 1e-3`.
pub fn tolerance_ladder(first: f64, last: f64, step: f64) -> Vec<(f64, f64)> {
    let count = ((first - last) / step).round() as usize + 1;
    (0..count)
        .map(|i| {
            let rtol = 10f64.powf(first - step * i as f64);
            (rtol, rtol * 1e-3)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyKind {
    /// Fixed grids with the given step counts; the config's mode decides
    /// between uniform and random grids.
    Converge { grids: Vec<usize> },
    /// Adaptive runs over `(rtol, atol)` pairs.
    Adapt { tolerances: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub problem: String,
    pub kind: StudyKind,
    pub config: PipelineConfig,
    pub out: Option<PathBuf>,
}

impl StudySpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Spec(m.to_string()));
        match &self.kind {
            StudyKind::Converge { grids } => {
                if grids.len() < 2 {
                    return bad("at least two grid sizes are needed");
                }
                if grids.windows(2).any(|w| w[0] >= w[1]) || grids[0] == 0 {
                    return bad("grid sizes must be positive and strictly increasing");
                }
                if !matches!(self.config.mode, Mode::Uniform | Mode::RandomGrid) {
                    return bad("convergence studies need the uniform or random-grid mode");
                }
            }
            StudyKind::Adapt { tolerances } => {
                if tolerances.is_empty() {
                    return bad("empty tolerance ladder");
                }
                if tolerances.windows(2).any(|w| w[0].0 <= w[1].0) {
                    return bad("rtol must be strictly decreasing along the ladder");
                }
                if !self.config.mode.adaptive_predictor() {
                    return bad("adaptive studies need an adaptive mode");
                }
            }
        }
        Ok(())
    }
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub steps: usize,
    pub mean_dt: f64,
    pub error: f64,
    /// Slope fitted over all grids of the level.
    pub fitted_order: f64,
}

/// One row of an adaptive study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub level: usize,
    pub rtol: f64,
    pub atol: f64,
    pub mean_dt: f64,
    pub error: f64,
    pub naccept: usize,
    pub nreject: usize,
}

/// Results of a study. When a run faults, the rows gathered so far are kept
/// and `fault` holds the error.
#[derive(Debug)]
pub struct Report<R> {
    pub rows: Vec<R>,
    pub traces: Vec<RunTrace>,
    pub fault: Option<HarnessError>,
}

impl<R> Report<R> {
    pub fn complete(&self) -> bool {
        self.fault.is_none()
    }
}

fn mean_dt(sys: &IvpSystem, naccept: usize) -> f64 {
    sys.span() / naccept.max(1) as f64
}

/// Runs every grid size and fits the observed order per level.
pub fn convergence_study(
    sys: &IvpSystem,
    reference: &ReferenceSolution,
    base: &PipelineConfig,
    grids: &[usize],
) -> Report<ConvergenceRow> {
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut fault = None;
    for &n in grids {
        let cfg = PipelineConfig {
            steps: Some(n),
            ..base.clone()
        };
        let run = execute(sys, &cfg).map_err(HarnessError::from);
        match run.and_then(|trace| level_errors(&trace, sys, reference).map(|e| (trace, e))) {
            Ok((trace, errors)) => {
                for (level, (lt, error)) in trace.levels.iter().zip(errors).enumerate() {
                    rows.push(ConvergenceRow {
                        level,
                        steps: n,
                        mean_dt: mean_dt(sys, lt.accepted),
                        error,
                        fitted_order: f64::NAN,
                    });
                }
                traces.push(trace);
            }
            Err(e) => {
                fault = Some(e);
                break;
            }
        }
    }
    for level in 0..base.levels {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.level == level)
            .map(|r| (r.mean_dt, r.error))
            .unzip();
        let slope = if x.len() >= 2 { fitted_slope(&x, &y) } else { f64::NAN };
        rows.iter_mut()
            .filter(|r| r.level == level)
            .for_each(|r| r.fitted_order = slope);
    }
    Report { rows, traces, fault }
}

/// Fitted order per level from a convergence table.
pub fn fitted_orders(rows: &[ConvergenceRow]) -> Vec<f64> {
    let levels = rows.iter().map(|r| r.level + 1).max().unwrap_or(0);
    (0..levels)
        .map(|l| rows.iter().find(|r| r.level == l).map_or(f64::NAN, |r| r.fitted_order))
        .collect()
}

/// Runs the tolerance ladder with the same tolerances on every level.
pub fn adaptive_study(
    sys: &IvpSystem,
    reference: &ReferenceSolution,
    base: &PipelineConfig,
    tolerances: &[(f64, f64)],
) -> Report<StudyRow> {
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut fault = None;
    for &(rtol, atol) in tolerances {
        let template = base.controls.first().copied().unwrap_or_default();
        let cfg = PipelineConfig {
            controls: vec![ControlParams { atol, rtol, ..template }],
            ..base.clone()
        };
        let run = execute(sys, &cfg).map_err(HarnessError::from);
        match run.and_then(|trace| level_errors(&trace, sys, reference).map(|e| (trace, e))) {
            Ok((trace, errors)) => {
                for (level, (lt, error)) in trace.levels.iter().zip(errors).enumerate() {
                    rows.push(StudyRow {
                        level,
                        rtol,
                        atol,
                        mean_dt: mean_dt(sys, lt.accepted),
                        error,
                        naccept: lt.accepted,
                        nreject: lt.rejected,
                    });
                }
                traces.push(trace);
            }
            Err(e) => {
                fault = Some(e);
                break;
            }
        }
    }
    Report { rows, traces, fault }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::auzinger;

    #[test]
    fn final_error_examples() {
        assert_eq!(final_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(final_error(&[4.0, 6.0, 1.0, 0.5], &[1.0, 2.0, 1.0, 0.5]), 5.0);
    }

    #[test]
    fn exact_solution_has_no_error() {
        let (sys, reference) = auzinger();
        let exact = reference.at(sys.end()).unwrap().unwrap();
        assert!(final_error(&[10f64.cos(), 10f64.sin()], &exact) <= 1e-13);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(3)).collect();
        assert!((fitted_slope(&x, &y) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ladder_pairs_tolerances() {
        let l = tolerance_ladder(-3.5, -5.5, 0.5);
        assert_eq!(l.len(), 5);
        assert!((l[0].0 - 10f64.powf(-3.5)).abs() < 1e-18);
        assert!((l[4].1 - 10f64.powf(-8.5)).abs() < 1e-22);
    }

    #[test]
    fn spec_validation() {
        let mut spec = StudySpec {
            problem: "auzinger".into(),
            kind: StudyKind::Converge {
                grids: vec![100, 200, 400],
            },
            config: PipelineConfig::default(),
            out: None,
        };
        assert!(spec.validate().is_ok());
        spec.kind = StudyKind::Converge { grids: vec![200, 100] };
        assert!(spec.validate().is_err());
        spec.kind = StudyKind::Adapt {
            tolerances: vec![(1e-4, 1e-7), (1e-3, 1e-6)],
        };
        spec.config.mode = Mode::AdaptivePred;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn predictor_order_is_one() {
        let (sys, reference) = auzinger();
        let report = convergence_study(&sys, &reference, &PipelineConfig::uniform(1, 400), &[400, 800, 1600]);
        assert!(report.complete());
        let orders = fitted_orders(&report.rows);
        assert!((orders[0] - 1.0).abs() < 0.15, "{orders:?}");
    }
}
