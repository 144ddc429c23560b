//! End-to-end CLI checks: exit codes, the pinned CSV schema, and the
//! bundled-data paths.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridsplit"))
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

#[test]
fn run_happy_path_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["run", "--case", "case9", "--scenario", "fault_bus2", "--benchmark", "--out", "."],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("fault_bus2.csv").exists());
    let summary = fs::read_to_string(dir.path().join("fault_bus2_summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert!(v["max_deviation"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["max_iterations"].as_u64().unwrap(), 2);
}

#[test]
fn csv_header_is_schema_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "--scenario", "load_step_075", "--benchmark"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("load_step_075.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    let mut want = vec!["t".to_string(), "iter".to_string()];
    for b in 1..=9 {
        want.push(format!("V_mag_bus{b}"));
    }
    for b in 1..=9 {
        want.push(format!("V_ang_bus{b}"));
    }
    want.extend(["delta_g2", "delta_g3", "omega_g2", "omega_g3"].map(String::from));
    for k in 1..=13 {
        want.push(format!("gfm_x{k}"));
    }
    for b in 1..=9 {
        want.push(format!("bench_V_mag_bus{b}"));
    }
    assert_eq!(header, want.join(","));
}

#[test]
fn missing_scenario_exits_3_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "--scenario", "no_such_scenario"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no_such_scenario"), "{err}");
}

#[test]
fn impossible_sigma_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["run", "--scenario", "fault_bus2", "--sigma", "1e-300"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_identical_files_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "--scenario", "line6_change"]);
    assert!(out.status.success());
    let out = run_in(dir.path(), &["compare", "line6_change.csv", "line6_change.csv"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max deviation: 0e0"), "{stdout}");
}

#[test]
fn compare_decomposed_against_benchmark_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "--scenario", "fault_bus2", "--benchmark"]);
    assert!(out.status.success());
    let out = run_in(
        dir.path(),
        &["compare", "fault_bus2.csv", "fault_bus2.csv", "--bench-b", "--tol", "1e-6"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn compare_differing_traces_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.csv"), "t,V_mag_bus1\n0,1.0\n0.1,1.0\n").unwrap();
    fs::write(dir.path().join("b.csv"), "t,V_mag_bus1\n0,1.1\n0.1,1.1\n").unwrap();
    let out = run_in(dir.path(), &["compare", "a.csv", "b.csv", "--tol", "1e-6"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_mismatched_axes_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.csv"), "t,V_mag_bus1\n0,1.0\n").unwrap();
    fs::write(dir.path().join("b.csv"), "t,V_mag_bus1\n0.5,1.0\n").unwrap();
    let out = run_in(dir.path(), &["compare", "a.csv", "b.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn eig_prints_thirteen_eigenvalues_and_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["eig", "--case", "case9"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("stable = true"), "{stdout}");
    let eig_lines = stdout.lines().filter(|l| l.trim_start().starts_with(['+', '-'])).count();
    assert_eq!(eig_lines, 13, "{stdout}");
}

#[test]
fn eig_sweep_writes_grid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["eig", "--case", "case9", "--sweep", "Rv_over_Xv=0.05:0.05:1.0"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("eig_sweep.csv")).unwrap();
    // 0.05..=1.0 in 0.05 steps: 20 rows plus the header
    assert_eq!(csv.lines().count(), 21, "{csv}");
    assert!(csv.lines().next().unwrap().contains("rv_over_xv"));
}

#[test]
fn eig_without_gfm_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let case = "\
base_mva = 100
frequency = 60
[BUS]
id type Pd Qd Gs Bs baseKV
1 slack 0 0 0 0 230
2 pq 50 20 0 0 230
[BRANCH]
from to r x b status
1 2 0.01 0.1 0.0 1
[GEN]
bus Pg Qg Vg kind params
1 0 0 1.0 machine m1
[machine m1]
H = 3.7
D = 0
tau_g = 5
dp = 0.01
xd_p = 0.15
";
    fs::write(dir.path().join("nogfm.case"), case).unwrap();
    let out = run_in(dir.path(), &["eig", "--case", "nogfm.case"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn file_based_scenario_with_case_override() {
    let dir = tempfile::tempdir().unwrap();
    // scenario referencing a bogus case; the flag must win
    fs::write(
        dir.path().join("my.scn"),
        "case = does_not_exist\nsubsystem_cut = 1-4\nhorizon = 0.5\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["run", "--case", "case9", "--scenario", "my.scn"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("my.csv").exists());
}

#[test]
fn workers_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env("GRIDSPLIT_WORKERS", "3")
        .args(["run", "--scenario", "line6_change"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary = fs::read_to_string(dir.path().join("line6_change_summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["workers"].as_u64(), Some(3));
}
