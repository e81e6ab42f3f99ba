use std::path::Path;
use std::process::{Command, Output};

fn stochns(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochns"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).expect("file exists")
}

#[test]
fn deterministic_verify_exits_zero_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochns(&["deterministic-verify"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("deterministic-verify/verification.csv"));
    assert!(csv.starts_with("n_side,h,velocity_l2,velocity_h1,pressure_l2"));
    assert!(dir.path().join("deterministic-verify/config.toml").exists());
}

#[test]
fn run_path_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["run-path", "--seed", "7", "--steps", "16", "--n-side", "4"];
    assert!(stochns(&args, a.path()).status.success());
    assert!(stochns(&args, b.path()).status.success());
    let sa = read(a.path().join("run-path/summary.csv"));
    assert_eq!(sa, read(b.path().join("run-path/summary.csv")));
    assert_eq!(sa.lines().count(), 17);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(stochns(&["run-path", "--seed", "3", "--steps", "8", "--n-side", "4"], a.path()).status.success());
    let cfg = a.path().join("run-path/config.toml");
    let o = stochns(&["run-path", "--config", cfg.to_str().unwrap()], b.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(a.path().join("run-path/summary.csv")), read(b.path().join("run-path/summary.csv")));
}

#[test]
fn convergence_time_rows_per_level_and_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochns(
        &[
            "convergence-time", "--n-side", "4", "--paths", "2", "--parallel", "1", "--k-levels", "0.25,0.125,0.0625,0.03125",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("convergence-time/errors.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("axis,level,estimator,value,stderr,n_paths,seed"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 3);
    for e in ["EAu", "EBu", "Ep"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(2) == Some(e)).count(), 3);
    }
    assert!(read(dir.path().join("convergence-time/errors.svg")).starts_with("<svg"));
    assert!(read(dir.path().join("convergence-time/rates.csv")).contains("time,EAu,"));
}

#[test]
fn convergence_space_and_diagnostics_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochns(
        &["convergence-space", "--paths", "2", "--h-levels", "0.5,0.25", "--k", "0.25"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(dir.path().join("convergence-space/errors.csv")).lines().count(), 4);
    let o = stochns(
        &["diagnostics", "--n-side", "4", "--steps", "4", "--paths", "2", "--epsilon", "0.1,1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ind = read(dir.path().join("diagnostics/indicators.csv"));
    assert_eq!(ind.lines().count(), 3);
    assert_eq!(read(dir.path().join("diagnostics/paths.csv")).lines().count(), 3);
}

#[test]
fn invalid_input_gives_json_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochns(&["convergence-space", "--h-levels", "0.25,0.16666666666666666"], dir.path());
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(v["error"], "not-nested");

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[scheme]\nunknown_key = 3\n").unwrap();
    let o = stochns(&["run-path", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(v["error"], "config");
    assert!(v["message"].as_str().unwrap().contains("unknown_key"));
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stochns"))
        .args(["run-path", "--steps", "2", "--n-side", "4"])
        .env("STOCHNS_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("run-path/summary.csv").exists());
}
