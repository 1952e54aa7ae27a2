use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn oulab(args: &[&str]) -> Output {
    oulab_env(args, &[])
}

fn oulab_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_oulab"));
    c.args(args).env_remove("OULAB_SEED").env_remove("OULAB_WORKERS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const TINY_BACKBONE: [&str; 9] = [
    "backbone",
    "--horizon",
    "2",
    "--replicas",
    "100",
    "--set",
    "experiment.observe=[1.0]",
    "--set",
    "experiment.limit_draws=200",
];

#[test]
fn first_moment_at_origin_is_zero() {
    let out = oulab(&["moments", "--k", "1", "--f", "x", "--x", "0", "--t", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["value"], 0.0);
    assert_eq!(v["kind"], "u_super");
}

#[test]
fn moments_take_negative_and_multidimensional_points() {
    let out = oulab(&["moments", "--dim", "2", "--f", "x1*x2", "--k", "2", "--x", "-1,0.5", "--t", "0.5", "--kind", "v", "--all"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["x"], serde_json::json!([-1.0, 0.5]));
}

#[test]
fn regime_mismatch_exits_with_usage_code() {
    let out = oulab(&["clt", "--regime", "critical"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("regime"));
}

#[test]
fn unknown_flags_and_keys_exit_with_usage_code() {
    assert_eq!(oulab(&["clt", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(oulab(&["clt", "--set", "experiment.nonsense=1"]).status.code(), Some(2));
    assert_eq!(oulab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(oulab(&["clt", "--replicas", "10"]).status.code(), Some(2));
}

#[test]
fn malformed_config_file_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[model\nsigma = 1").unwrap();
    let out = oulab(&["clt", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed config"));
}

#[test]
fn passing_run_writes_report_manifest_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let mut args = TINY_BACKBONE.to_vec();
    args.extend(["--set", "experiment.nu=[]", "--out", out_dir.to_str().unwrap()]);
    let out = oulab(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "manifest.json", "rows.csv"] {
        let text = std::fs::read_to_string(out_dir.join(f)).unwrap();
        assert!(text.ends_with('\n'), "{f}");
    }
    let rows = std::fs::read_to_string(out_dir.join("rows.csv")).unwrap();
    assert!(rows.starts_with("replica_id,atoms,w_t1,w_horizon,i1_horizon\n"));
    assert_eq!(rows.lines().count(), 101);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["suite"], "backbone");
    assert_eq!(report["manifest"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn failed_verdict_exits_with_one() {
    // A single particle per unit mass is far from the superprocess.
    let out = oulab(&[
        "mass-law",
        "--resolution",
        "1",
        "--replicas",
        "2000",
        "--horizon",
        "3",
        "--set",
        "experiment.ks_time=2",
        "--set",
        "experiment.limit_draws=1000",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(json(&out)["verdicts"].as_array().unwrap().iter().any(|v| v["passed"] == false));
}

#[test]
fn seed_comes_from_flag_then_file_then_environment() {
    let seed_of = |out: &Output| json(out)["manifest"]["seed"].as_u64().unwrap();
    assert_eq!(seed_of(&oulab_env(&TINY_BACKBONE, &[("OULAB_SEED", "41")])), 41);
    let mut args = TINY_BACKBONE.to_vec();
    args.extend(["--seed", "7"]);
    assert_eq!(seed_of(&oulab_env(&args, &[("OULAB_SEED", "41")])), 7);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let text = oulab_core_default().replace("[experiment]", "[experiment]\nseed = 5");
    std::fs::write(&path, text).unwrap();
    let mut args = TINY_BACKBONE.to_vec();
    args.extend(["--config", path.to_str().unwrap()]);
    assert_eq!(seed_of(&oulab_env(&args, &[("OULAB_SEED", "41")])), 5);
    assert_eq!(oulab_env(&TINY_BACKBONE, &[("OULAB_SEED", "x")]).status.code(), Some(2));
}

fn oulab_core_default() -> String {
    "[model]\nsigma = 1.0\nmu = 1.0\nalpha = 1.0\nbeta = 1.0\n\n[experiment]\nhorizon = 10.0\nresolution = 100\nreplicas = 1000\n".into()
}

#[test]
fn same_seed_gives_identical_rows_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    for w in ["1", "4"] {
        let d = dir.path().join(w);
        let out = oulab(&["clt", "--beta", "0.5", "--horizon", "3", "--resolution", "5", "--replicas", "150", "--workers", w, "--out", d.to_str().unwrap()]);
        assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
        rows.push(std::fs::read(d.join("rows.csv")).unwrap());
    }
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn simulate_writes_positions_and_backbone_log() {
    let dir = tempfile::tempdir().unwrap();
    let pos = dir.path().join("pos.csv");
    let out = oulab(&["simulate", "--horizon", "1", "--resolution", "20", "--positions", pos.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let text = std::fs::read_to_string(&pos).unwrap();
    assert_eq!(text.lines().count() as u64, v["count"].as_u64().unwrap() + 2);

    let log = dir.path().join("bb.log");
    let out = oulab(&["simulate", "--process", "backbone", "--horizon", "1.5", "--log", log.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let records: Vec<_> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| oulab_core::backbone::LogRecord::parse(l).unwrap())
        .collect();
    let state = oulab_core::backbone::replay(&records, 1).unwrap();
    assert_eq!(state.particles.len() as u64, json(&out)["count"].as_u64().unwrap());
}

#[test]
fn variance_reports_the_regime_quantity() {
    let out = oulab(&["variance", "--beta", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["sigma_sq"].as_f64().unwrap() - 0.25).abs() < 1e-9);
    let out = oulab(&["variance", "--regime", "critical", "--alpha", "2"]);
    assert_eq!(json(&out)["closed_form"]["sigma_sq"], 0.5);
    let out = oulab(&["variance", "--alpha", "3", "--f", "x^2"]);
    assert_eq!(json(&out)["all_finite"], true);
}

#[test]
fn quick_validation_of_analytic_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let out = oulab(&["validate", "--quick", "--only", "3,5,6", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let ids: Vec<u64> = v["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![3, 5, 6]);
    assert!(Path::new(&dir.path().join("validation.json")).exists());
    assert_eq!(oulab(&["validate", "--only", "13"]).status.code(), Some(2));
}
