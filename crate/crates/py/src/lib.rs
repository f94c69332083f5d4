//! Python bindings: problems, run configuration, both executors, studies and
//! the weight routines.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ridc::controller::ControlParams;
use ridc::harness::{self, cli::apply_config_file_text, HarnessError};
use ridc::pipeline::{self, Estimator, Mode, PipelineConfig, RunError, RunTrace};
use ridc::problems::{IvpSystem, ProblemRegistry, ReferenceSolution};
use ridc::weights::{self, Stencil};

type ConvergenceTuple = (usize, usize, f64, f64, f64);
type StudyTuple = (usize, f64, f64, f64, f64, usize, usize);

fn run_error(e: RunError) -> PyErr {
    match e {
        RunError::Config(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn harness_error(e: HarnessError) -> PyErr {
    match e {
        HarnessError::Run(r) => run_error(r),
        HarnessError::Spec(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A built-in initial-value problem with its reference solution.
#[pyclass(name = "Problem", module = "ridc_py", frozen)]
struct PyProblem {
    sys: IvpSystem,
    reference: ReferenceSolution,
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        let (sys, reference) = ProblemRegistry::default()
            .get(name)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { sys, reference })
    }

    #[staticmethod]
    fn names() -> Vec<String> {
        ProblemRegistry::default().names().map(String::from).collect()
    }

    #[getter]
    fn name(&self) -> &str {
        self.sys.name()
    }

    #[getter]
    fn interval(&self) -> (f64, f64) {
        (self.sys.start(), self.sys.end())
    }

    #[getter]
    fn initial(&self) -> Vec<f64> {
        self.sys.initial().to_vec()
    }

    /// Reference value at `t`, or None where the reference is undefined.
    fn reference(&self, t: f64) -> PyResult<Option<Vec<f64>>> {
        self.reference.at(t).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Problem('{}')", self.sys.name())
    }
}

/// Run configuration. Keyword arguments mirror the TOML config keys;
/// `rtol`/`atol` set one control entry shared by all levels.
#[pyclass(name = "Config", module = "ridc_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (levels=4, mode="uniform", estimator="step-doubling", steps=None, omega=1.0, seed=0, dt0=None, reset=0, window=None, rtol=None, atol=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        levels: usize,
        mode: &str,
        estimator: &str,
        steps: Option<usize>,
        omega: f64,
        seed: u64,
        dt0: Option<f64>,
        reset: usize,
        window: Option<usize>,
        rtol: Option<f64>,
        atol: Option<f64>,
    ) -> PyResult<Self> {
        let mode: Mode = mode.parse().map_err(PyValueError::new_err)?;
        let estimator: Estimator = estimator.parse().map_err(PyValueError::new_err)?;
        let mut control = ControlParams::default();
        if let Some(r) = rtol {
            control.rtol = r;
            control.atol = atol.unwrap_or(r * 1e-3);
        } else if let Some(a) = atol {
            control.atol = a;
        }
        Ok(Self {
            inner: PipelineConfig {
                levels,
                mode,
                estimator,
                steps,
                omega,
                seed,
                dt0,
                reset,
                window,
                controls: vec![control],
                ..PipelineConfig::default()
            },
        })
    }

    /// Applies TOML overrides and returns the merged configuration.
    fn with_toml(&self, text: &str) -> PyResult<Self> {
        let inner = apply_config_file_text(&self.inner, text).map_err(PyValueError::new_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.levels
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.name()
    }

    #[getter]
    fn estimator(&self) -> &'static str {
        self.inner.estimator.name()
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window_size()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Per-level results of one run.
#[pyclass(name = "Trace", module = "ridc_py", frozen)]
struct PyTrace {
    inner: RunTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn levels(&self) -> usize {
        self.inner.levels.len()
    }

    #[getter]
    fn final_values(&self) -> Vec<Vec<f64>> {
        self.inner.levels.iter().map(|l| l.final_value.clone()).collect()
    }

    /// `(naccept, nreject)` per level.
    #[getter]
    fn counts(&self) -> Vec<(usize, usize)> {
        self.inner.levels.iter().map(|l| (l.accepted, l.rejected)).collect()
    }

    #[getter]
    fn rhs_evals(&self) -> Vec<u64> {
        self.inner.levels.iter().map(|l| l.rhs_evals).collect()
    }

    /// Attempted steps of `level` as `(t, dt, accepted, eps)` tuples.
    fn steps(&self, level: usize) -> PyResult<Vec<(f64, f64, bool, f64)>> {
        let lt = self
            .inner
            .levels
            .get(level)
            .ok_or_else(|| PyValueError::new_err(format!("no level {level}")))?;
        Ok(lt.steps.iter().map(|s| (s.t, s.dt, s.accepted, s.eps)).collect())
    }

    /// Committed node times of `level`, including the initial time.
    fn nodes(&self, level: usize, start: f64) -> PyResult<Vec<f64>> {
        let lt = self
            .inner
            .levels
            .get(level)
            .ok_or_else(|| PyValueError::new_err(format!("no level {level}")))?;
        Ok(std::iter::once(start).chain(lt.node_times()).collect())
    }

    /// Final error of every level against the problem's reference.
    fn errors(&self, problem: &PyProblem) -> PyResult<Vec<f64>> {
        harness::level_errors(&self.inner, &problem.sys, &problem.reference).map_err(harness_error)
    }

    /// Bitwise equality of all numbers, ignoring timings.
    fn same_numbers(&self, other: &PyTrace) -> bool {
        self.inner.same_numbers(&other.inner)
    }

    /// The trace in CSV form.
    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        harness::write_trace_csv(&mut buf, &harness::trace_rows(&self.inner)).map_err(harness_error)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Runs `problem` with `executor` "auto" (chosen by RIDC_THREADS), "serial"
/// or "pipelined". The GIL is released while the run is in progress.
#[pyfunction]
#[pyo3(signature = (problem, config, executor="auto"))]
fn solve(py: Python<'_>, problem: &PyProblem, config: &PyConfig, executor: &str) -> PyResult<PyTrace> {
    let run = match executor {
        "auto" => pipeline::execute,
        "serial" => pipeline::run_serial,
        "pipelined" => pipeline::run_pipelined,
        other => return Err(PyValueError::new_err(format!("unknown executor '{other}'"))),
    };
    let (sys, cfg) = (problem.sys.clone(), config.inner.clone());
    let inner = py.detach(move || run(&sys, &cfg)).map_err(run_error)?;
    Ok(PyTrace { inner })
}

/// Rows `(level, N, mean_dt, error, fitted_order)` over the given grids.
#[pyfunction]
fn convergence_study(
    py: Python<'_>,
    problem: &PyProblem,
    config: &PyConfig,
    grids: Vec<usize>,
) -> PyResult<Vec<ConvergenceTuple>> {
    let report = py.detach(|| harness::convergence_study(&problem.sys, &problem.reference, &config.inner, &grids));
    if let Some(e) = report.fault {
        return Err(harness_error(e));
    }
    Ok(report
        .rows
        .iter()
        .map(|r| (r.level, r.steps, r.mean_dt, r.error, r.fitted_order))
        .collect())
}

/// Rows `(level, rtol, atol, mean_dt, error, naccept, nreject)` over
/// `(rtol, atol)` pairs.
#[pyfunction]
fn adaptive_study(
    py: Python<'_>,
    problem: &PyProblem,
    config: &PyConfig,
    tolerances: Vec<(f64, f64)>,
) -> PyResult<Vec<StudyTuple>> {
    let report = py.detach(|| harness::adaptive_study(&problem.sys, &problem.reference, &config.inner, &tolerances));
    if let Some(e) = report.fault {
        return Err(harness_error(e));
    }
    Ok(report
        .rows
        .iter()
        .map(|r| (r.level, r.rtol, r.atol, r.mean_dt, r.error, r.naccept, r.nreject))
        .collect())
}

fn stencil(nodes: Vec<f64>, s: f64, e: f64) -> PyResult<Stencil> {
    Stencil::new(nodes, s, e).map_err(|err| PyValueError::new_err(err.to_string()))
}

/// Integrals over `[s, e]` of the Lagrange basis on `nodes`.
#[pyfunction]
fn quadrature_weights(nodes: Vec<f64>, s: f64, e: f64) -> PyResult<Vec<f64>> {
    Ok(weights::quadrature_weights(&stencil(nodes, s, e)?))
}

/// Values at `x` of the Lagrange basis on `nodes`.
#[pyfunction]
fn interpolation_weights(nodes: Vec<f64>, x: f64) -> PyResult<Vec<f64>> {
    let (lo, hi) = match (nodes.first(), nodes.last()) {
        (Some(&lo), Some(&hi)) if lo < hi => (lo, hi),
        (Some(&lo), _) => (lo, lo + 1.0),
        _ => return Err(PyValueError::new_err("empty stencil")),
    };
    Ok(weights::interpolation_weights(&stencil(nodes, lo, hi)?, x))
}

#[pymodule]
fn ridc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_study, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_study, m)?)?;
    m.add_function(wrap_pyfunction!(quadrature_weights, m)?)?;
    m.add_function(wrap_pyfunction!(interpolation_weights, m)?)?;
    m.add("MAX_CONSECUTIVE_REJECTS", pipeline::MAX_CONSECUTIVE_REJECTS)?;
    Ok(())
}
