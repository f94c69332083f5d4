use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ridc::harness::{read_convergence_csv, read_study_csv, read_trace_csv};

const ERROR_EQN: &str = r#"
levels = 3
mode = "adaptive-error-eqn"
[[controls]]
rtol = 1e-4
atol = 1e-6
[[controls]]
rtol = 1e-5
atol = 1e-7
[[controls]]
rtol = 1e-6
atol = 1e-8
"#;

fn ridc(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ridc"))
        .args(args)
        .env("RIDC_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["solve"],
        vec!["solve", "--problem", "auzinger", "--frobnicate"],
        vec!["solve", "--problem", "nosuch"],
        vec!["solve", "--problem", "auzinger", "--mode", "sideways"],
        vec!["solve", "--problem", "auzinger", "--levels", "0"],
        vec!["converge", "--problem", "auzinger", "--grids", "400,200"],
        vec!["study", "--problem", "auzinger", "--mode", "uniform"],
        vec!["launch"],
    ] {
        let out = ridc(&args, dir.path());
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn solve_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = ridc(
        &["solve", "--problem", "auzinger", "--levels", "3", "--steps", "50"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("level,n,t,dt,accepted,eps,y0,y1\n"));
    let rows = read_trace_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 150);
    assert!(rows.iter().all(|r| r.accepted && r.y.len() == 2));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "solve",
        "--problem",
        "orbit",
        "--mode",
        "random-grid",
        "--omega",
        "3",
        "--seed",
        "17",
        "--steps",
        "400",
    ];
    let first = ridc(&args, dir.path());
    let second = ridc(&args, dir.path());
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, second.stdout);
    let other = ridc(&[&args[..8], &["18", "--steps", "400"]].concat(), dir.path());
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn run_faults_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("accumulated.toml");
    fs::write(&config, format!("error_eqn_estimate = \"accumulated\"\n{ERROR_EQN}")).unwrap();
    let out = ridc(
        &["solve", "--problem", "auzinger", "--config", config.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("consecutive rejections"));

    let missing = dir.path().join("no/such/dir/out.csv");
    let out = ridc(
        &["solve", "--problem", "auzinger", "--out", missing.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("ee.toml");
    fs::write(&config, ERROR_EQN).unwrap();
    let csv = dir.path().join("trace.csv");
    let out = ridc(
        &[
            "solve",
            "--problem",
            "auzinger",
            "--levels",
            "4",
            "--mode",
            "uniform",
            "--config",
            config.to_str().unwrap(),
            "--out",
            csv.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_trace_csv(fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.level).max(), Some(2));
    let accepted = |l: usize| rows.iter().filter(|r| r.level == l && r.accepted).count();
    assert_eq!((accepted(0), accepted(1), accepted(2)), (542, 10123, 202));
}

#[test]
fn converge_reports_fitted_orders() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("conv.csv");
    let out = ridc(
        &[
            "converge",
            "--problem",
            "auzinger",
            "--levels",
            "2",
            "--grids",
            "200,400,800",
            "--out",
            csv.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("level,N,mean_dt,error,fitted_order\n"));
    let rows = read_convergence_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 6);
    assert!((rows[0].fitted_order - 1.0).abs() < 0.2);
    assert!((rows[1].fitted_order - 2.0).abs() < 0.3);
}

#[test]
fn study_writes_one_row_per_level_and_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let out = ridc(
        &[
            "study",
            "--problem",
            "orbit",
            "--levels",
            "2",
            "--estimator",
            "heun-euler",
            "--rtol",
            "1e-3,1e-4",
            "--traces",
            traces.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_study_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.atol == r.rtol * 1e-3));
    assert!(rows[2].naccept > rows[0].naccept);
    assert_eq!(fs::read_dir(&traces).unwrap().count(), 2);
}

#[test]
fn lorenz_reference_is_cached() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--problem", "lorenz", "--levels", "2", "--steps", "2000"];
    let first = ridc(&args, dir.path());
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let cached: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(cached.len(), 1);
    assert_eq!(cached[0].extension().unwrap(), "csv");
    assert_eq!(ridc(&args, dir.path()).stdout, first.stdout);
}
