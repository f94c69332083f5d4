//! `ridc solve | converge | study`.
//!
//! Exit codes: 0 on success, 1 when a run faults or output cannot be
//! written, 2 on usage errors (bad flags, unknown problem, invalid config).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::controller::ControlParams;
use crate::pipeline::{execute, Estimator, Mode, PipelineConfig};
use crate::problems::{IvpSystem, ProblemRegistry, ReferenceSolution};

use super::{
    adaptive_study, convergence_study, fitted_orders, level_errors, tolerance_ladder, trace_rows,
    write_convergence_csv, write_study_csv, write_trace_csv, HarnessError, StudyKind, StudySpec,
};

#[derive(Debug, Parser)]
#[command(name = "ridc", version, about = "RIDC integrator with adaptive step-size control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single run; writes the step trace.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Step count for fixed grids (default from --dt0, else 100).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Convergence study on fixed grids.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
        grids: Vec<usize>,
    },
    /// Adaptive study over a tolerance ladder.
    Study {
        #[command(flatten)]
        common: Common,
        /// Directory for per-run step traces.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    problem: String,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    estimator: Option<Estimator>,
    /// Relative tolerance; a comma-separated ladder for `study`.
    #[arg(long, value_delimiter = ',')]
    rtol: Vec<f64>,
    /// Absolute tolerance; defaults to rtol * 1e-3 in studies.
    #[arg(long, value_delimiter = ',')]
    atol: Vec<f64>,
    #[arg(long)]
    reset: Option<usize>,
    #[arg(long)]
    dt0: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with PipelineConfig fields; its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// A usage error (exit 2) or a run fault (exit 1).
enum Failure {
    Usage(String),
    Fault(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Spec(m) => Failure::Usage(m),
            HarnessError::Problem(p) => Failure::Usage(p.to_string()),
            HarnessError::Run(crate::pipeline::RunError::Config(m)) => Failure::Usage(m),
            other => Failure::Fault(other.to_string()),
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Fault(m)) => {
            eprintln!("run failed: {m}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { common, steps } => solve(common, steps),
        Command::Converge { common, grids } => converge(common, grids),
        Command::Study { common, traces } => study(common, traces),
    }
}

/// Builds the configuration from flags, then applies the config file.
fn build_config(c: &Common, default_mode: Mode) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig {
        mode: c.mode.unwrap_or(default_mode),
        ..PipelineConfig::default()
    };
    if let Some(v) = c.levels {
        cfg.levels = v;
    }
    if let Some(v) = c.estimator {
        cfg.estimator = v;
    }
    if let Some(v) = c.reset {
        cfg.reset = v;
    }
    cfg.dt0 = c.dt0;
    if let Some(v) = c.omega {
        cfg.omega = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    Ok(cfg)
}

fn with_config_file(cfg: PipelineConfig, c: &Common) -> Result<PipelineConfig, Failure> {
    match &c.config {
        Some(path) => apply_config_file(cfg, path),
        None => Ok(cfg),
    }
}

/// Overlays the keys present in a TOML file onto `cfg`.
pub fn apply_config_file_text(cfg: &PipelineConfig, text: &str) -> Result<PipelineConfig, String> {
    let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    let mut merged = toml::Table::try_from(cfg).map_err(|e| e.to_string())?;
    merged.extend(overrides);
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| e.to_string())
}

fn apply_config_file(cfg: PipelineConfig, path: &Path) -> Result<PipelineConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    apply_config_file_text(&cfg, &text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn single(values: &[f64], name: &str) -> Result<Option<f64>, Failure> {
    match values {
        [] => Ok(None),
        [v] => Ok(Some(*v)),
        _ => Err(Failure::Usage(format!("--{name} takes a single value here"))),
    }
}

fn lookup(name: &str) -> Result<(IvpSystem, ReferenceSolution), Failure> {
    ProblemRegistry::default()
        .get(name)
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(io::BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Failure::Fault(format!("{}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn solve(c: Common, steps: Option<usize>) -> Result<(), Failure> {
    let (sys, reference) = lookup(&c.problem)?;
    let mut cfg = build_config(&c, Mode::Uniform)?;
    if steps.is_some() {
        cfg.steps = steps;
    }
    let rtol = single(&c.rtol, "rtol")?;
    let atol = single(&c.atol, "atol")?;
    if rtol.is_some() || atol.is_some() {
        let rtol = rtol.unwrap_or(ControlParams::default().rtol);
        cfg.controls = vec![ControlParams::new(atol.unwrap_or(rtol * 1e-3), rtol)];
    }
    let cfg = with_config_file(cfg, &c)?;
    cfg.validate(&sys).map_err(|e| Failure::Usage(e.to_string()))?;
    let trace = execute(&sys, &cfg).map_err(|e| Failure::Fault(e.to_string()))?;
    let errors = level_errors(&trace, &sys, &reference).ok();
    write_trace_csv(output(&c.out)?, &trace_rows(&trace))?;
    for (l, lt) in trace.levels.iter().enumerate() {
        let err = errors.as_ref().map_or(String::from("n/a"), |e| format!("{:.3e}", e[l]));
        eprintln!(
            "level {l}: naccept {} nreject {} error {err} rhs_evals {}",
            lt.accepted, lt.rejected, lt.rhs_evals
        );
    }
    Ok(())
}

fn converge(c: Common, grids: Vec<usize>) -> Result<(), Failure> {
    let (sys, reference) = lookup(&c.problem)?;
    let cfg = with_config_file(build_config(&c, Mode::Uniform)?, &c)?;
    let spec = StudySpec {
        problem: c.problem.clone(),
        kind: StudyKind::Converge { grids: grids.clone() },
        config: cfg,
        out: c.out.clone(),
    };
    spec.validate()?;
    spec.config.validate(&sys).map_err(|e| Failure::Usage(e.to_string()))?;
    let report = convergence_study(&sys, &reference, &spec.config, &grids);
    write_convergence_csv(output(&spec.out)?, &report.rows)?;
    for (l, order) in fitted_orders(&report.rows).iter().enumerate() {
        eprintln!("level {l}: fitted order {order:.3}");
    }
    match report.fault {
        None => Ok(()),
        Some(e) => Err(Failure::Fault(format!("incomplete study: {e}"))),
    }
}

fn study(c: Common, traces: Option<PathBuf>) -> Result<(), Failure> {
    let (sys, reference) = lookup(&c.problem)?;
    let cfg = with_config_file(build_config(&c, Mode::AdaptivePred)?, &c)?;
    let tolerances = if c.rtol.is_empty() {
        if !c.atol.is_empty() {
            return Err(Failure::Usage("--atol needs matching --rtol values".into()));
        }
        tolerance_ladder(-3.5, -5.5, 0.5)
    } else if c.atol.is_empty() {
        c.rtol.iter().map(|&r| (r, r * 1e-3)).collect()
    } else if c.atol.len() == c.rtol.len() {
        c.rtol.iter().copied().zip(c.atol.iter().copied()).collect()
    } else {
        return Err(Failure::Usage("--rtol and --atol lists differ in length".into()));
    };
    let spec = StudySpec {
        problem: c.problem.clone(),
        kind: StudyKind::Adapt {
            tolerances: tolerances.clone(),
        },
        config: cfg,
        out: c.out.clone(),
    };
    spec.validate()?;
    spec.config.validate(&sys).map_err(|e| Failure::Usage(e.to_string()))?;
    let report = adaptive_study(&sys, &reference, &spec.config, &tolerances);
    write_study_csv(output(&spec.out)?, &report.rows)?;
    if let Some(dir) = traces {
        fs::create_dir_all(&dir).map_err(|e| Failure::Fault(format!("{}: {e}", dir.display())))?;
        for (i, trace) in report.traces.iter().enumerate() {
            let path = dir.join(format!("{}-{i}.csv", spec.problem));
            let file = File::create(&path).map_err(|e| Failure::Fault(format!("{}: {e}", path.display())))?;
            write_trace_csv(io::BufWriter::new(file), &trace_rows(trace))?;
        }
    }
    match report.fault {
        None => Ok(()),
        Some(e) => Err(Failure::Fault(format!("incomplete study: {e}"))),
    }
}
