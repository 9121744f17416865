use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use transop::io::read_columns;
use transop::response::{keller_reference_a, keller_reference_b};

fn transop(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{cmd}.json"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("{cmd}-out"));
    let output = Command::new(env!("CARGO_BIN_EXE_transop"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .env_remove("TRANSOP_OUT_DIR")
        .output()
        .unwrap();
    (output, out)
}

fn summary(out: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn invariant_on_doubling_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = transop(
        dir.path(),
        "invariant",
        r#"{"map": {"kind": "named", "name": "doubling"}, "k": 4}"#,
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["result"]["levels"], serde_json::json!([1.0, 1.0, 1.0, 1.0]));
    assert_eq!(s["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(s["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(s["config"]["k"], 4);
    let rows = read_columns(&out.join("invariant.csv")).unwrap();
    assert!(rows.iter().all(|r| r[1] == 0.25));
}

#[test]
fn keller_csv_matches_reference_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"params": [{"a": 1.0, "b": 0.5, "r": 0.24}, {"a": 0.5, "b": 0.5, "r": 0.24}], "k": 4096}"#;
    let (o, out) = transop(dir.path(), "keller", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_columns(&out.join("keller_densities.csv")).unwrap();
    let k = rows.len() as f64;
    let (mut da, mut db) = (0.0, 0.0);
    for r in &rows {
        da += (r[1] - keller_reference_a(r[0])).abs() / k;
        db += (r[2] - keller_reference_b(r[0])).abs() / k;
    }
    assert!(da < 0.05 && db < 0.05, "{da} {db}");
}

#[test]
fn zero_direction_gives_zero_response() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"family": {"base": {"kind": "named", "name": "quartic_sine"}, "direction": {}}, "grid": 512, "tol": 1e-12, "ladder": [0.1]}"#;
    let (o, out) = transop(dir.path(), "response", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_columns(&out.join("response.csv")).unwrap();
    assert_eq!(rows.len(), 512);
    assert!(rows.iter().all(|r| r[1] == 0.0));
}

#[test]
fn schema_violation_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = transop(
        dir.path(),
        "invariant",
        r#"{"map": {"kind": "named", "name": "doubling"}, "k": 4, "kk": 1}"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("kk"));

    let (o, _) = transop(
        dir.path(),
        "decay",
        r#"{"map": {"kind": "named", "name": "doubling"}, "grid": "big", "steps": 3, "observable": {"kind": "identity"}}"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["field"], "grid");
}

#[test]
fn numerical_errors_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"map": {"kind": "keller", "a": 1.0, "b": 0.5, "r": 0.24}, "trials": 1, "n_max": 1, "resolution": 64, "norm": "w11"}"#;
    let (o, _) = transop(dir.path(), "ly", cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "unsupported");

    let (o, _) = transop(
        dir.path(),
        "invariant",
        r#"{"map": {"kind": "keller", "a": 1.0, "b": 0.5, "r": 0.6}, "k": 8}"#,
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "invalid_map");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        r#"{"map": {"kind": "named", "name": "quartic_sine"}, "trials": 2, "n_max": 3, "resolution": 256, "seed": 5}"#;
    let (_, out) = transop(dir.path(), "ly", cfg, &[]);
    assert_eq!(summary(&out)["seed"], 5);
    let (_, out) = transop(dir.path(), "ly", cfg, &["--seed", "9"]);
    assert_eq!(summary(&out)["seed"], 9);
    assert_eq!(summary(&out)["result"]["report"]["seed"], 9);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("inv.json");
    std::fs::write(
        &cfg,
        r#"{"map": {"kind": "named", "name": "doubling"}, "k": 2, "output_dir": "ignored"}"#,
    )
    .unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_transop"))
        .args(["invariant", "--threads", "2", "--config"])
        .arg(&cfg)
        .current_dir(dir.path())
        .env("TRANSOP_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(target.join("summary.json").exists());
    assert!(!dir.path().join("ignored").exists());
}
