use std::path::{Path, PathBuf};

use nsfde_cli::{main_with, parse_config, CliError};
use nsfde_core::verify::CheckReport;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("nsfde").chain(args.iter().copied()).map(Into::into);
    let code = main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn config_error(text: &str) -> (String, Option<String>, Option<usize>) {
    match parse_config(text) {
        Err(CliError::Config { message, key, line, .. }) => (message, key, line),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn minimal_config_is_accepted() {
    let cfg = parse_config(r#"{"grid": {"T": 1, "N": 6, "L": 0}, "tree": {"d": 1}, "problem": {"preset": "lq"}}"#).unwrap();
    assert_eq!(cfg.grid.steps, 6);
    assert_eq!(cfg.seed, 1);
}

#[test]
fn kappa_at_one_is_rejected() {
    let (msg, key, line) = config_error(
        "{\n  \"grid\": {\"T\": 1, \"N\": 6, \"L\": 2},\n  \"problem\": {\"preset\": \"neutral-linear\",\n    \"kappa\": 1.0}\n}",
    );
    assert_eq!(key.as_deref(), Some("problem.kappa"));
    assert_eq!(line, Some(4));
    assert!(msg.contains("κ < 1"), "{msg}");
}

#[test]
fn sub_probability_weights_are_rejected_with_a_line() {
    let text = std::fs::read_to_string(shipped("inline-tanh.json"))
        .unwrap()
        .replace("[[0, 0.5], [2, 0.5]]", "[[0, 0.5], [2, 0.4]]");
    let (msg, _, line) = config_error(&text);
    assert!(msg.contains("total mass 1"), "{msg}");
    assert_eq!(line, Some(9));
}

#[test]
fn structural_and_grid_errors() {
    let (msg, _, line) = config_error(r#"{"grid": {"T": 1, "N": 6}, "problem": {"preset": "lq"}, "extra": 0}"#);
    assert!(msg.contains("unknown field `extra`"), "{msg}");
    assert_eq!(line, Some(1));
    let (msg, key, _) = config_error(r#"{"grid": {"T": 1, "N": 4, "L": 5}, "problem": {"preset": "lq"}}"#);
    assert_eq!(key.as_deref(), Some("grid"));
    assert!(msg.contains("exceeds"), "{msg}");
    let (msg, key, line) = config_error("{\"grid\": {\"T\": 1,\n \"N\": 25}, \"problem\": {\"preset\": \"lq\"}}");
    assert_eq!((key.as_deref(), line), (Some("tree"), Some(2)));
    assert!(msg.contains("budget"), "{msg}");
    let (msg, key, _) =
        config_error(r#"{"grid": {"T": 1, "N": 4}, "problem": {"preset": "lq"}, "checks": {"alpha": 1, "beta": 2}}"#);
    assert_eq!(key.as_deref(), Some("checks.beta"));
    assert!(msg.contains("β > 2/α"), "{msg}");
    let (_, key, _) = config_error(r#"{"grid": {"T": 1, "N": 4}, "problem": {}}"#);
    assert_eq!(key.as_deref(), Some("problem"));
}

#[test]
fn inline_neutral_terms_must_contract() {
    let text = std::fs::read_to_string(shipped("inline-tanh.json")).unwrap().replace("\"scale\": 0.4", "\"scale\": 4.0");
    let (msg, key, line) = config_error(&text);
    assert_eq!(key.as_deref(), Some("problem.inline.neutral"));
    assert!(line.is_some());
    assert!(msg.contains("contraction"), "{msg}");
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")).unwrap() {
        let p = entry.unwrap().path();
        parse_config(&std::fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn duality_on_random_linear_seed_one() {
    let (code, out, _) = run(&["duality", "--preset", "random-linear", "--seed", "1"]);
    assert_eq!(code, 0);
    let reports: Vec<CheckReport> = serde_json::from_str(&out).unwrap();
    let d = reports.iter().find(|r| r.check == "duality").unwrap();
    assert!(d.rel_dev <= 1e-9);
    assert_eq!(d.config["seed"], "1");
}

#[test]
fn equivalence_rejects_delays() {
    let (code, out, err) = run(&["equivalence", "--preset", "lq"]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "config");
    assert_eq!(v["key"], "grid.L");
    assert!(v["message"].as_str().unwrap().contains("δ = 0"));
}

#[test]
fn equivalence_runs_undelayed() {
    let (code, out, _) = run(&["equivalence", "--config", shipped("random-undelayed.json").to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    let reports: Vec<CheckReport> = serde_json::from_str(&out).unwrap();
    assert!(reports.iter().any(|r| r.check == "equivalence-q"));
}

#[test]
fn forward_writes_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let (code, _, _) = run(&["forward", "--preset", "neutral-linear", "--out", d]);
    assert_eq!(code, 0);
    let x = std::fs::read_to_string(dir.path().join("forward-x.csv")).unwrap();
    let mut lines = x.lines();
    assert_eq!(lines.next(), Some("level,node,component,value"));
    assert!(lines.next().unwrap().starts_with("-2,0,0,"));
    // levels −2..=8 with 1, 1, 1, 2, …, 256 nodes
    assert_eq!(x.lines().count(), 1 + 2 + 511);
    assert!(dir.path().join("forward-report.json").exists());
}

#[test]
fn adjoint_writes_z_slices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"T": 1, "N": 4, "L": 1}, "problem": {"preset": "delay-linear"}, "checks": {"slices": [1, 3]}}"#,
    );
    let out_dir = dir.path().join("out");
    let (code, _, _) = run(&["adjoint", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code, 0);
    let z = std::fs::read_to_string(out_dir.join("adjoint-z.csv")).unwrap();
    assert_eq!(z.lines().next(), Some("i,j,node,component,value"));
    let rows: std::collections::BTreeSet<&str> = z.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows.into_iter().collect::<Vec<_>>(), vec!["1", "3"]);
    assert!(out_dir.join("adjoint-report.csv").exists());
    assert!(!out_dir.join("adjoint-report.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = run(&["mp-check", "--preset", "neutral-tanh", "--seed", "4"]);
    let b = run(&["mp-check", "--preset", "neutral-tanh", "--seed", "4", "--threads", "3"]);
    assert_eq!(a.0, 0);
    assert_eq!(a.1, b.1);
}

#[test]
fn failing_checks_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"grid": {"T": 1, "N": 6}, "problem": {"preset": "lq"}, "optimizer": {"steps": 1}}"#);
    let (code, out, err) = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    let reports: Vec<CheckReport> = serde_json::from_str(&out).unwrap();
    assert!(!reports.iter().find(|r| r.check == "optimizer-converged").unwrap().pass);
    assert!(err.contains("fail: optimizer-converged"));
}

#[test]
fn solver_failures_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"T": 1, "N": 6, "L": 2}, "problem": {"preset": "neutral-linear", "kappa": 0.9}, "solver": {"max_iter": 2}}"#,
    );
    let (code, _, err) = run(&["adjoint", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 3);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "solver");
    assert!(v["message"].as_str().unwrap().contains("did not converge"));
}

#[test]
fn csv_reports_mirror_json() {
    let (_, json, _) = run(&["diagnostics", "--preset", "neutral-linear"]);
    let (_, csv, _) = run(&["diagnostics", "--preset", "neutral-linear", "--format", "csv"]);
    let reports: Vec<CheckReport> = serde_json::from_str(&json).unwrap();
    assert_eq!(csv.lines().count(), reports.len() + 1);
    assert!(reports.iter().any(|r| r.check == "picard-update-ratio"));
}

#[test]
fn usage_errors() {
    assert_eq!(run(&["selftest", "--threads", "0"]).0, 2);
    assert_eq!(run(&["duality", "--preset", "nope"]).0, 2);
    assert_eq!(run(&["frobnicate"]).0, 2);
    let (code, _, err) = run(&["forward", "--config", "/nonexistent/run.json"]);
    assert_eq!(code, 4);
    assert!(err.contains("\"io\""));
}
