//! End-to-end checks of the compiled binary: argument parsing, report
//! emission, sweep batching, and exit codes.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pwls-bddc"))
}

const SMALL: &[&str] = &["--n", "2", "--m", "1", "--p", "6", "--kappa", "2pi"];

#[test]
fn solve_writes_versioned_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = bin()
        .arg("solve")
        .args(SMALL)
        .args(["--theta-f", "1000", "--theta-e", "1000", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let body = std::fs::read_to_string(&out).unwrap();
    let report = pwls_bddc::report::Report::from_json(&body).unwrap();
    assert_eq!(report.schema_version, pwls_bddc::report::SCHEMA_VERSION);
    assert_eq!(report.cases.len(), 1);
    let c = &report.cases[0];
    assert!(c.converged);
    assert_eq!(c.pnum_v, 6);
    assert!((c.kappa - 2.0 * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn sweep_emits_one_csv_row_per_value() {
    let output = bin()
        .arg("sweep")
        .args(SMALL)
        .args(["--param", "theta-f", "--values", "10,1000", "--format", "csv"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8(output.stdout).unwrap();
    let lines: Vec<&str> = stdout.trim().lines().collect();
    assert_eq!(lines.len(), 3, "{stdout}");
    assert!(lines[0].starts_with("n,m,p,kappa"));
}

#[test]
fn config_pairs_apply_with_flag_precedence() {
    let output = bin()
        .arg("solve")
        .args(["--config", "n=2", "--config", "m=1", "--config", "p=6"])
        .args(["--config", "kappa=4pi", "--kappa", "2pi", "--format", "csv"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8(output.stdout).unwrap();
    // Explicit --kappa wins over the config pair.
    let row = stdout.trim().lines().nth(1).unwrap();
    let kappa: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((kappa - 2.0 * std::f64::consts::PI).abs() < 1e-12, "{row}");
}

#[test]
fn verify_passes_on_small_case() {
    let output = bin().arg("verify").args(SMALL).arg("--exact").output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stdout));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 8, "{stdout}");
}

#[test]
fn bad_input_exits_with_code_two() {
    let output = bin().arg("solve").args(["--kappa", "eight"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let output = bin().arg("solve").args(SMALL).args(["--theta-f", "4q"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}
