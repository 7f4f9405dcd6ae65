use std::path::Path;
use std::process::{Command, Output};

fn ssop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssop")).args(args).output().expect("spawn ssop")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut args = vec!["generate", "-o", &path];
    args.extend_from_slice(extra);
    let out = ssop(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn generate_then_run_prints_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "a.json", &["--n", "6", "--seed", "4", "--space", "plane"]);
    let out = ssop(&["run", &inst, "--algorithm", "ssop", "--theta", "2", "--lambda", "0.8", "--predictor", "oracle_best"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["n"], 6);
    assert_eq!(v["report"]["violated"], false);
    assert!(v["report"]["ratio"].as_f64().unwrap() >= 1.0);
}

#[test]
fn verify_includes_trace_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "a.json", &["--n", "4", "--kind", "oldarp", "--space", "explicit", "--nodes", "6"]);
    let out = ssop(&["verify", &inst, "--algorithm", "smartstart", "--theta", "2.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["trace"]["schedules"].is_array());
    assert!(v["report"]["certified_bound"].is_number());
    assert_eq!(v["algorithm"], "smartstart");
}

#[test]
fn verify_refuses_ignore() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "a.json", &["--n", "3"]);
    assert_eq!(ssop(&["run", &inst, "--algorithm", "ignore"]).status.code(), Some(0));
    assert_eq!(ssop(&["verify", &inst, "--algorithm", "ignore"]).status.code(), Some(2));
}

#[test]
fn missing_ssop_parameters_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "a.json", &["--n", "3"]);
    let no_pred = ssop(&["run", &inst, "--algorithm", "ssop", "--theta", "2", "--lambda", "0.8"]);
    assert_eq!(no_pred.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_pred.stderr).contains("--predictor"));
    let no_lambda = ssop(&["run", &inst, "--algorithm", "ssop", "--theta", "2", "--predictor", "fixed_late"]);
    assert_eq!(no_lambda.status.code(), Some(2));
    let bad_lambda = ssop(&["run", &inst, "--algorithm", "ssop", "--theta", "2", "--lambda", "0.3", "--predictor", "late"]);
    assert_eq!(bad_lambda.status.code(), Some(2));
    assert_eq!(ssop(&["run", &inst, "--algorithm", "bogus"]).status.code(), Some(2));
}

#[test]
fn malformed_instance_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"problem":"oltsp","space":{"kind":"line"},"requests":[{"id":0,"a":[1.0],"b":null}]}"#).unwrap();
    let out = ssop(&["run", path.to_str().unwrap(), "--algorithm", "smartstart", "--theta", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing field arrival_time at request 0"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), "a.json", &["--n", "5", "--seed", "9"]);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("instance = {inst}\nalgorithm = ssop\ntheta = 2.0\nlambda = 0.9\npredictor = fixed_early\n")).unwrap();
    let cfg = cfg.to_str().unwrap();
    let base = json(&ssop(&["--config", cfg, "run"]));
    assert_eq!(base["lambda"], 0.9);
    assert_eq!(base["predictor"], "fixed_early");
    let over = json(&ssop(&["--config", cfg, "run", "--lambda", "0.7", "--theta", "3"]));
    assert_eq!(over["lambda"], 0.7);
    assert_eq!(over["theta"], 3.0);
}

#[test]
fn sweep_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.json", &["--n", "5", "--seed", "1", "--space", "plane"]);
    let b = generate(dir.path(), "b.json", &["--n", "5", "--seed", "2", "--space", "plane"]);
    let csv = dir.path().join("out.csv");
    let out = ssop(&[
        "sweep",
        "--instances",
        &format!("{a},{b}"),
        "--thetas",
        "2,3",
        "--lambdas",
        "0.8,1",
        "--predictors",
        "oracle_best,fixed_late",
        "--jobs",
        "2",
        "-o",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 2);
    assert!(text.lines().nth(1).unwrap().starts_with("a,ssop,"));
    let summary = String::from_utf8_lossy(&out.stderr);
    assert!(summary.contains("violations: none"));
    assert_eq!(summary.lines().count(), 1 + 4 + 1);
}

#[test]
fn sweep_is_independent_of_job_count() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = cfg_dir.path().join("sweep.cfg");
    std::fs::write(&cfg, "generate = 5\nn = 5\nthetas = 2.3\nlambdas = 0.6, 1.0\npredictors = oracle_best, adversarial_worst\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let one = ssop(&["--config", cfg, "sweep", "--jobs", "1"]);
    let four = ssop(&["--config", cfg, "sweep", "--jobs", "4"]);
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn lowerbound_prints_a_certificate() {
    let out = ssop(&["lowerbound", "--k", "8", "--algorithm", "smartstart", "--theta", "2.3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["opt_cost"], 2.0);
    assert_eq!(v["holds"], true);
    assert!(v["ratio"].as_f64().unwrap() >= 2.0 - 1.0 / 8.0 || v["analyzed"] == false);
}

#[test]
fn lowerbound_oracle_needs_lookahead() {
    let args = ["lowerbound", "--k", "4", "--algorithm", "ssop", "--theta", "2", "--lambda", "0.8", "--predictor", "oracle"];
    assert_eq!(ssop(&args).status.code(), Some(0));
    let mut blind = args.to_vec();
    blind.push("--no-lookahead");
    assert_eq!(ssop(&blind).status.code(), Some(2));
}
