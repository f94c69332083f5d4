//! Initial-value problems and the built-in benchmark suite.
//!
//! Every problem is a first-order system `y' = f(t, y)` on `[a, b]`. The
//! right-hand side is shared behind an `Arc` so one [`IvpSystem`] can be used
//! by all level workers at once.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::steppers::{rk_pair_step, ButcherPair};

/// Signature of a right-hand side: writes `f(t, y)` into the output slice.
pub type RhsFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Non-finite right-hand side or stage value.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("non-finite value in {context} at t = {t}")]
pub struct StepFault {
    pub t: f64,
    pub context: &'static str,
}

/// Anything that can evaluate `f(t, y)`.
pub trait Rhs {
    fn dim(&self) -> usize;

    fn eval_into(&self, t: f64, y: &[f64], dydt: &mut [f64]);

    /// Evaluates into a fresh vector, rejecting NaN or infinite components.
    fn eval(&self, t: f64, y: &[f64]) -> Result<Vec<f64>, StepFault> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, y, &mut out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(StepFault { t, context: "rhs" })
        }
    }
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("unknown problem '{0}'")]
    Unknown(String),
    #[error("problem name '{0}' must be non-empty lowercase ASCII")]
    BadName(String),
    #[error("reference cache {path}: {source}")]
    Cache { path: PathBuf, source: io::Error },
}

/// A first-order IVP `y' = f(t, y)`, `y(a) = y_a`.
#[derive(Clone)]
pub struct IvpSystem {
    name: String,
    start: f64,
    end: f64,
    initial: Vec<f64>,
    rhs: Arc<RhsFn>,
}

impl IvpSystem {
    pub fn new(
        name: impl Into<String>,
        start: f64,
        end: f64,
        initial: Vec<f64>,
        rhs: Arc<RhsFn>,
    ) -> Result<Self, ProblemError> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(ProblemError::Invalid(format!(
                "interval [{start}, {end}] must be finite with a < b"
            )));
        }
        if initial.is_empty() || initial.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::Invalid(
                "initial state must be a non-empty finite vector".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            start,
            end,
            initial,
            rhs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn span(&self) -> f64 {
        self.end - self.start
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }
}

impl Rhs for IvpSystem {
    fn dim(&self) -> usize {
        self.initial.len()
    }

    fn eval_into(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (self.rhs)(t, y, dydt)
    }
}

impl fmt::Debug for IvpSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IvpSystem")
            .field("name", &self.name)
            .field("interval", &(self.start, self.end))
            .field("initial", &self.initial)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Analytic,
    FineNumerical,
    PeriodicReturn,
}

type AnalyticFn = dyn Fn(f64) -> Vec<f64> + Send + Sync;
type TableFn = dyn Fn() -> Result<ReferenceTable, ProblemError> + Send + Sync;

/// Reference values used to measure errors.
///
/// Analytic references are defined everywhere; numerical references only at
/// their tabulated sample times; periodic references only at the end point.
#[derive(Clone)]
pub struct ReferenceSolution {
    inner: RefInner,
}

#[derive(Clone)]
enum RefInner {
    Analytic(Arc<AnalyticFn>),
    Table {
        build: Arc<TableFn>,
        table: Arc<OnceLock<Result<ReferenceTable, String>>>,
    },
    Periodic {
        end: f64,
        value: Vec<f64>,
    },
}

/// Sampled reference trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ReferenceTable {
    fn lookup(&self, t: f64) -> Option<Vec<f64>> {
        let scale = self.times.last().map_or(1.0, |v| v.abs().max(1.0));
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * scale)
            .map(|i| self.values[i].clone())
    }
}

impl ReferenceSolution {
    pub fn analytic(f: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            inner: RefInner::Analytic(Arc::new(f)),
        }
    }

    /// A lazily built sampled reference; `build` runs at most once.
    pub fn fine_numerical(build: impl Fn() -> Result<ReferenceTable, ProblemError> + Send + Sync + 'static) -> Self {
        Self {
            inner: RefInner::Table {
                build: Arc::new(build),
                table: Arc::new(OnceLock::new()),
            },
        }
    }

    pub fn periodic_return(end: f64, value: Vec<f64>) -> Self {
        Self {
            inner: RefInner::Periodic { end, value },
        }
    }

    pub fn kind(&self) -> ReferenceKind {
        match &self.inner {
            RefInner::Analytic(_) => ReferenceKind::Analytic,
            RefInner::Table { .. } => ReferenceKind::FineNumerical,
            RefInner::Periodic { .. } => ReferenceKind::PeriodicReturn,
        }
    }

    /// Reference value at `t`, or `None` where the reference is undefined.
    pub fn at(&self, t: f64) -> Result<Option<Vec<f64>>, ProblemError> {
        match &self.inner {
            RefInner::Analytic(f) => Ok(Some(f(t))),
            RefInner::Periodic { end, value } => {
                Ok(((t - end).abs() <= 1e-12 * end.abs().max(1.0)).then(|| value.clone()))
            }
            RefInner::Table { build, table } => {
                let table = table.get_or_init(|| build().map_err(|e| e.to_string()));
                match table {
                    Ok(tab) => Ok(tab.lookup(t)),
                    Err(msg) => Err(ProblemError::Invalid(msg.clone())),
                }
            }
        }
    }
}

impl fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ReferenceSolution({:?})", self.kind())
    }
}

pub const ORBIT_MU: f64 = 0.012277471;
#[allow(clippy::excessive_precision)]
pub const ORBIT_PERIOD: f64 = 17.065216560159625588917206249;
#[allow(clippy::excessive_precision)]
pub const ORBIT_INITIAL: [f64; 4] = [0.994, 0.0, 0.0, -2.00158510637908252240537862224];

pub const LORENZ_SIGMA: f64 = 10.0;
pub const LORENZ_RHO: f64 = 28.0;
pub const LORENZ_BETA: f64 = 8.0 / 3.0;

/// Step used for the cached Lorenz reference.
pub const LORENZ_REFERENCE_DT: f64 = 1e-6;
const LORENZ_SAMPLES: usize = 100;

/// `y1' = -y2 + y1(1 - r^2)`, `y2' = y1 + 3 y2 (1 - r^2)` on `[0, 10]`;
/// exact solution `(cos t, sin t)`.
pub fn auzinger() -> (IvpSystem, ReferenceSolution) {
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let damp = 1.0 - y[0] * y[0] - y[1] * y[1];
        dy[0] = -y[1] + y[0] * damp;
        dy[1] = y[0] + 3.0 * y[1] * damp;
    };
    let sys = IvpSystem::new("auzinger", 0.0, 10.0, vec![1.0, 0.0], Arc::new(rhs)).expect("valid built-in problem");
    (sys, ReferenceSolution::analytic(|t| vec![t.cos(), t.sin()]))
}

fn lorenz_rhs(_t: f64, y: &[f64], dy: &mut [f64]) {
    dy[0] = LORENZ_SIGMA * (y[1] - y[0]);
    dy[1] = LORENZ_RHO * y[0] - y[1] - y[0] * y[2];
    dy[2] = y[0] * y[1] - LORENZ_BETA * y[2];
}

/// Lorenz system on `[0, 1]` from `(1, 1, 1)`. The reference is a fixed-step
/// RKF4(5) run, built on first use and cached as CSV under
/// [`reference_cache_dir`].
pub fn lorenz() -> (IvpSystem, ReferenceSolution) {
    let sys =
        IvpSystem::new("lorenz", 0.0, 1.0, vec![1.0, 1.0, 1.0], Arc::new(lorenz_rhs)).expect("valid built-in problem");
    let for_ref = sys.clone();
    let reference = ReferenceSolution::fine_numerical(move || {
        cached_reference(&for_ref, LORENZ_REFERENCE_DT, LORENZ_SAMPLES, &reference_cache_dir())
    });
    (sys, reference)
}

/// Denominators `(D1, D2)` of the restricted three-body equations.
pub fn orbit_denominators(y: &[f64]) -> (f64, f64) {
    let mu = ORBIT_MU;
    let mu_p = 1.0 - mu;
    let d1 = ((y[0] + mu).powi(2) + y[2].powi(2)).powf(1.5);
    let d2 = ((y[0] - mu_p).powi(2) + y[2].powi(2)).powf(1.5);
    (d1, d2)
}

/// Restricted three-body (Arenstorf) orbit, reduced to first order with state
/// `(y1, y1', y2, y2')`. The solution is periodic, so the reference at the
/// end point is the initial state. A collision (`D1` or `D2` zero) produces a
/// non-finite derivative, which steppers report as a [`StepFault`].
pub fn orbit() -> (IvpSystem, ReferenceSolution) {
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let mu = ORBIT_MU;
        let mu_p = 1.0 - mu;
        let (d1, d2) = orbit_denominators(y);
        dy[0] = y[1];
        dy[1] = y[0] + 2.0 * y[3] - mu_p * (y[0] + mu) / d1 - mu * (y[0] - mu_p) / d2;
        dy[2] = y[3];
        dy[3] = y[2] - 2.0 * y[1] - mu_p * y[2] / d1 - mu * y[2] / d2;
    };
    let sys = IvpSystem::new("orbit", 0.0, ORBIT_PERIOD, ORBIT_INITIAL.to_vec(), Arc::new(rhs))
        .expect("valid built-in problem");
    let reference = ReferenceSolution::periodic_return(ORBIT_PERIOD, ORBIT_INITIAL.to_vec());
    (sys, reference)
}

/// Directory for cached references: `$RIDC_CACHE_DIR`, else a `ridc-cache`
/// folder in the system temp directory.
pub fn reference_cache_dir() -> PathBuf {
    std::env::var_os("RIDC_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ridc-cache"))
}

/// Integrates `sys` with fixed-step RKF4(5) (fifth-order propagation) and
/// samples `samples + 1` equally spaced points including both ends.
pub fn fine_reference(sys: &IvpSystem, max_dt: f64, samples: usize) -> Result<ReferenceTable, StepFault> {
    let pair = ButcherPair::rkf45();
    let per_sample = ((sys.span() / samples as f64) / max_dt).ceil() as usize;
    let mut times = Vec::with_capacity(samples + 1);
    let mut values = Vec::with_capacity(samples + 1);
    let mut y = sys.initial().to_vec();
    times.push(sys.start());
    values.push(y.clone());
    for s in 0..samples {
        let t0 = sys.start() + sys.span() * (s as f64 / samples as f64);
        let t1 = if s + 1 == samples {
            sys.end()
        } else {
            sys.start() + sys.span() * ((s + 1) as f64 / samples as f64)
        };
        let h = (t1 - t0) / per_sample as f64;
        for i in 0..per_sample {
            y = rk_pair_step(&pair, sys, t0 + i as f64 * h, &y, h)?.state;
        }
        times.push(t1);
        values.push(y.clone());
    }
    Ok(ReferenceTable { times, values })
}

/// Loads the reference for `sys` from `dir/<name>.csv`, computing and
/// writing it when absent or unreadable.
pub fn cached_reference(
    sys: &IvpSystem,
    max_dt: f64,
    samples: usize,
    dir: &Path,
) -> Result<ReferenceTable, ProblemError> {
    let path = dir.join(format!("{}.csv", sys.name()));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Some(table) = parse_reference_csv(&text, sys.dim()) {
            if table.times.len() == samples + 1 {
                return Ok(table);
            }
        }
    }
    let table = fine_reference(sys, max_dt, samples)
        .map_err(|e| ProblemError::Invalid(format!("reference integration failed: {e}")))?;
    let io_err = |source| ProblemError::Cache {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    // Write to a sibling file first so concurrent readers never see a partial table.
    let tmp = dir.join(format!(".{}.{}.tmp", sys.name(), std::process::id()));
    fs::write(&tmp, reference_csv(&table)).map_err(io_err)?;
    fs::rename(&tmp, &path).map_err(io_err)?;
    Ok(table)
}

/// CSV with header `t,y0,..`, every value printed with 17 significant digits.
pub fn reference_csv(table: &ReferenceTable) -> String {
    let m = table.values.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for i in 0..m {
        out.push_str(&format!(",y{i}"));
    }
    out.push('\n');
    for (t, y) in table.times.iter().zip(&table.values) {
        out.push_str(&format!("{t:.16e}"));
        for v in y {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_reference_csv(text: &str, dim: usize) -> Option<ReferenceTable> {
    let mut lines = text.lines();
    lines.next()?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let nums: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .ok()?;
        if nums.len() != dim + 1 {
            return None;
        }
        times.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    Some(ReferenceTable { times, values })
}

type Constructor = Arc<dyn Fn() -> (IvpSystem, ReferenceSolution) + Send + Sync>;

/// Problems keyed by lowercase ASCII name.
#[derive(Clone)]
pub struct ProblemRegistry {
    entries: BTreeMap<String, Constructor>,
}

impl Default for ProblemRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("auzinger", auzinger).unwrap();
        reg.register("lorenz", lorenz).unwrap();
        reg.register("orbit", orbit).unwrap();
        reg
    }
}

impl ProblemRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(
        &mut self,
        name: &str,
        ctor: impl Fn() -> (IvpSystem, ReferenceSolution) + Send + Sync + 'static,
    ) -> Result<(), ProblemError> {
        let valid = !name.is_empty()
            && name
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_');
        if !valid {
            return Err(ProblemError::BadName(name.to_string()));
        }
        self.entries.insert(name.to_string(), Arc::new(ctor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<(IvpSystem, ReferenceSolution), ProblemError> {
        self.entries
            .get(name)
            .map(|ctor| ctor())
            .ok_or_else(|| ProblemError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xorshift::XorShiftRng;

    #[test]
    fn auzinger_rhs_examples() {
        let (sys, reference) = auzinger();
        assert_eq!(sys.eval(0.0, &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(sys.eval(3.7, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let r = reference.at(std::f64::consts::FRAC_PI_2).unwrap().unwrap();
        assert!(r[0].abs() <= 1e-15 && (r[1] - 1.0).abs() <= 1e-15);
        assert_eq!(sys.dim(), 2);
        assert_eq!((sys.start(), sys.end()), (0.0, 10.0));
    }

    #[test]
    fn auzinger_rhs_matches_analytic_derivative() {
        let (sys, _) = auzinger();
        let mut rng = XorShiftRng::seed_from_u64(7);
        for _ in 0..1000 {
            let t: f64 = rng.random_range(0.0..10.0);
            let d = sys.eval(t, &[t.cos(), t.sin()]).unwrap();
            assert!((d[0] + t.sin()).abs() <= 1e-12);
            assert!((d[1] - t.cos()).abs() <= 1e-12);
        }
    }

    #[test]
    fn lorenz_rhs_examples() {
        let (sys, reference) = lorenz();
        let d = sys.eval(0.0, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 26.0);
        assert!((d[2] + 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(sys.eval(0.0, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(sys.eval(0.0, &[1.0, 1.0, 0.0]).unwrap(), vec![0.0, 27.0, 1.0]);
        assert_eq!(reference.kind(), ReferenceKind::FineNumerical);
    }

    #[test]
    fn orbit_examples() {
        let (sys, reference) = orbit();
        let y = sys.initial().to_vec();
        let (d1, d2) = orbit_denominators(&y);
        assert!(d1 > 0.0 && d2 > 0.0);
        assert_eq!(d1, ((0.994 + ORBIT_MU).powi(2)).powf(1.5));
        let r = reference.at(ORBIT_PERIOD).unwrap().unwrap();
        assert_eq!(r, vec![0.994, 0.0, 0.0, -2.00158510637908252240537862224]);
        assert!(reference.at(1.0).unwrap().is_none());
        let d = sys.eval(0.0, &y).unwrap();
        assert_eq!(d[0], y[1]);
        assert_eq!(d[2], y[3]);
    }

    #[test]
    fn orbit_reduction_identity() {
        let (sys, _) = orbit();
        let mut rng = XorShiftRng::seed_from_u64(11);
        for _ in 0..200 {
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            let d = sys.eval(0.0, &y).unwrap();
            assert_eq!(d[0].to_bits(), y[1].to_bits());
            assert_eq!(d[2].to_bits(), y[3].to_bits());
        }
    }

    #[test]
    fn orbit_collision_is_a_fault() {
        let (sys, _) = orbit();
        let err = sys.eval(0.0, &[-ORBIT_MU, 0.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err.context, "rhs");
    }

    #[test]
    fn rhs_is_pure() {
        for (sys, _) in [auzinger(), lorenz(), orbit()] {
            let y: Vec<f64> = (0..sys.dim()).map(|i| 0.3 + 0.1 * i as f64).collect();
            let a = sys.eval(0.25, &y).unwrap();
            let b = sys.eval(0.25, &y).unwrap();
            assert!(a.iter().zip(&b).all(|(x, z)| x.to_bits() == z.to_bits()));
        }
    }

    #[test]
    fn registry_lookup_and_names() {
        let mut reg = ProblemRegistry::default();
        assert_eq!(reg.names().collect::<Vec<_>>(), ["auzinger", "lorenz", "orbit"]);
        assert_eq!(reg.get("orbit").unwrap().0.dim(), 4);
        assert!(matches!(reg.get("nope"), Err(ProblemError::Unknown(_))));
        assert!(matches!(reg.register("Bad", auzinger), Err(ProblemError::BadName(_))));
        reg.register("decay", || {
            let sys = IvpSystem::new(
                "decay",
                0.0,
                1.0,
                vec![1.0],
                Arc::new(|_t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0]),
            )
            .unwrap();
            (sys, ReferenceSolution::analytic(|t| vec![(-t).exp()]))
        })
        .unwrap();
        assert_eq!(reg.get("decay").unwrap().0.name(), "decay");
    }

    #[test]
    fn invalid_systems_rejected() {
        let rhs: Arc<RhsFn> = Arc::new(|_t: f64, _y: &[f64], _d: &mut [f64]| {});
        assert!(IvpSystem::new("x", 1.0, 1.0, vec![0.0], rhs.clone()).is_err());
        assert!(IvpSystem::new("x", 0.0, 1.0, vec![], rhs.clone()).is_err());
        assert!(IvpSystem::new("x", 0.0, 1.0, vec![f64::NAN], rhs).is_err());
    }

    #[test]
    fn reference_cache_round_trip() {
        let (sys, _) = auzinger();
        let dir = tempfile::tempdir().unwrap();
        let built = cached_reference(&sys, 1e-3, 10, dir.path()).unwrap();
        assert!(dir.path().join("auzinger.csv").exists());
        let loaded = cached_reference(&sys, 1e-3, 10, dir.path()).unwrap();
        assert_eq!(built, loaded);
        let end = built.values.last().unwrap();
        assert!((end[0] - 10f64.cos()).abs() < 1e-9);
    }
}
