use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nvopt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvopt"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("NVOPT_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn optimize_writes_run_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"optimize": {"n_restarts": 1}}"#);
    let out = nvopt(
        &["optimize", "--method", "rabi-resonant", "--T", "1", "--seed", "7", "--config", &cfg, "--workers", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let exp = dir.path().join("optimize");
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(exp.join("runs/rabi-resonant_T1_r0000.json")).unwrap()).unwrap();
    assert_eq!(record["seed"], 7);
    assert_eq!(record["method"], "rabi-resonant");
    assert_eq!(record["convention"], "plain");
    let hash = record["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let csv = fs::read_to_string(exp.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().contains(hash));
    let manifest = fs::read_to_string(exp.join("MANIFEST")).unwrap();
    assert!(manifest.contains("seeds: 7") && manifest.contains(hash));
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(exp.join("spec.json")).unwrap()).unwrap();
    assert_eq!(echo["config"]["optimize"]["methods"], serde_json::json!(["rabi-resonant"]));
}

#[test]
fn unknown_method_lists_allowed_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvopt(&["optimize", "--method", "simplex"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for m in ["adiabatic-nm", "adiabatic-grape", "rabi-resonant", "rabi-detuning"] {
        assert!(err.contains(m), "{err}");
    }
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"lamda": 0.5}"#);
    let out = nvopt(&["validate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
}

#[test]
fn missing_config_and_bad_env_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvopt(&["validate", "--config", "/nonexistent/config.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_nvopt"))
        .args(["validate", "--out"])
        .arg(dir.path())
        .env("NVOPT_WORKERS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_passes_and_records_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvopt(&["validate"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    let csv = fs::read_to_string(dir.path().join("validate/results.csv")).unwrap();
    assert!(csv.starts_with("name,passed,detail,config_hash,convention"));
}

#[test]
fn runtime_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"simulate": {"pulse_file": "/nonexistent/pulse.json"}}"#);
    let out = nvopt(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_exports_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"simulate": {"variant": {"dims": 4, "dissipation": true}, "stride": 50}}"#);
    let out = nvopt(&["simulate", "--config", &cfg, "--T", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("simulate/results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t_ns,P_minus1,P_0,P_plus1,P_A2,trace,config_hash,convention");
    // 400 segments at stride 50 plus t = 0
    assert_eq!(lines.count(), 9);
}
