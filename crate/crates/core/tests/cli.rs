use std::path::Path;
use std::process::{Command, Output};

fn multiwell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiwell")).args(args).output().expect("spawn multiwell")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const CONSTANT: &str = r#"{
  "potential": "gl-scalar",
  "domain": {"shape": "rectangle", "x0": 0, "y0": 0, "x1": 1, "y1": 1},
  "boundary": "constant-well:1",
  "eps_list": [0.2],
  "grid_ratio": 4
}"#;

const SWEEP: &str = r#"{
  "potential": "gl-scalar",
  "domain": {"shape": "rectangle", "x0": 0, "y0": 0, "x1": 1, "y1": 1},
  "boundary": "two-phase:90",
  "eps_list": [0.2, 0.1, 0.05],
  "grid_ratio": 4,
  "fit_date": "2026-01-01",
  "validation_disks": 50
}"#;

#[test]
fn version_and_usage() {
    let o = multiwell(&["version"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("multiwell "));
    assert_eq!(multiwell(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"potential": "gl-scalar", "eps_list": [0.1], "grid_ratio": 8}"#);
    let o = multiwell(&["solve", "--config", &cfg, "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("domain") && err.contains("bad.json"), "{err}");
}

#[test]
fn constant_run_solve_check_concentrate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONSTANT);
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    let o = multiwell(&["solve", "--config", &cfg, "--out", run_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run.join("manifest.json").is_file() && run.join("fields/member-0.json").is_file());
    assert!(String::from_utf8_lossy(&o.stderr).contains("energy="));
    let o = multiwell(&["check", "--out", run_s, "--suite", "functionals"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(multiwell(&["check", "--out", run_s, "--suite", "nonsense"]).status.code(), Some(2));
    assert_eq!(multiwell(&["check", "--out", dir.path().join("absent").to_str().unwrap()]).status.code(), Some(2));
    let o = multiwell(&["concentrate", "--out", run_s, "--eta0", "0.5"]);
    assert_eq!(o.status.code(), Some(2), "a single member cannot define a limit measure");
    assert_eq!(multiwell(&["constants", "--out", run_s]).status.code(), Some(2));
}

#[test]
fn sweep_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SWEEP);
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    let o = multiwell(&["--threads", "1", "solve", "--config", &cfg, "--out", run_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stderr).matches("energy=").count(), 3);
    let suites = "potential,functionals,levelsets,clearing,concentration";
    let a = multiwell(&["check", "--out", run_s, "--suite", suites]);
    let b = multiwell(&["check", "--out", run_s, "--suite", suites]);
    assert_eq!((a.status.code(), b.status.code()), (Some(0), Some(0)), "{}", String::from_utf8_lossy(&a.stderr));
    let mut reports: Vec<_> = std::fs::read_dir(run.join("reports")).unwrap().map(|e| e.unwrap().path()).collect();
    reports.sort();
    assert_eq!(reports.len(), 2);
    assert_eq!(std::fs::read(&reports[0]).unwrap(), std::fs::read(&reports[1]).unwrap());
    let o = multiwell(&["constants", "--out", run_s]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("\"eta0\"") && text.contains("two-phase:90"), "{text}");
    let o = multiwell(&["concentrate", "--out", run_s, "--eta0", "manifest"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(run.join("concentration/sstar.csv")).unwrap();
    assert!(csv.starts_with("x,y,theta,component\n") && csv.lines().count() > 1);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("concentration/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["set"]["n_components"], 1);
    assert!(run.join("concentration/hopf.csv").is_file(), "{}", summary["hopf"]);
}
