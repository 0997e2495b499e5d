use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("etrs-cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn etrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etrs"))
        .args(args)
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn num(v: &Value, key: &str) -> f64 {
    v[key]
        .as_f64()
        .unwrap_or_else(|| panic!("{key} missing in {v}"))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_examples() {
    let out = etrs(&["solve", path(&fixture("tight_cut.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["status"], "optimal");
    assert!((num(&v, "value") + 1.0).abs() < 1e-8);
    assert_eq!(v["newdc"], true);
    assert_eq!(v["dc"], false);
    assert!((num(&v, "surrogate_value") + 1.0).abs() < 1e-6);

    let v = json(&etrs(&["solve", path(&fixture("gap_cut.json"))]));
    assert!(num(&v, "value").abs() < 1e-8);
    assert_eq!(v["newdc"], false);
    assert_eq!(v["surrogate_value"], Value::Null);
}

#[test]
fn solve_text_table() {
    let out = etrs(&["solve", path(&fixture("tight_cut.json")), "--text"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text
        .lines()
        .any(|l| l.starts_with("status") && l.ends_with("optimal")));
    assert!(text
        .lines()
        .any(|l| l.starts_with("value") && l.ends_with("-1")));
}

#[test]
fn malformed_input_reports_position() {
    let out = etrs(&["solve", path(&fixture("bad/malformed.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2, column 26"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_with_input_code() {
    assert_eq!(etrs(&["solve"]).status.code(), Some(1));
    assert_eq!(etrs(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(etrs(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_file_is_an_input_error() {
    let out = etrs(&["solve", "/nonexistent/instance.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_exit_code() {
    let out = etrs(&["solve", path(&fixture("bench_infeasible/outside.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["status"], "infeasible");
    assert_eq!(v["value"], Value::Null);
}

#[test]
fn bad_tolerance_rejected() {
    let out = etrs(&["solve", path(&fixture("tight_cut.json")), "--tol", "-1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn vertex_budget_exit_code() {
    let file = scratch("wide.json");
    let out = etrs(&["gen", "random", "--n", "4", "--m", "6", "--seed", "3"]);
    std::fs::write(&file, &out.stdout).unwrap();
    let out = etrs(&["oracle", path(&file)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn output_is_deterministic() {
    let file = scratch("det.json");
    std::fs::write(
        &file,
        etrs(&["gen", "random", "--n", "4", "--m", "3", "--seed", "11"]).stdout,
    )
    .unwrap();
    let a = etrs(&["solve", path(&file)]).stdout;
    let b = etrs(&["solve", path(&file)]).stdout;
    let c = etrs(&["solve", path(&file), "--parallel"]).stdout;
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn check_reports() {
    let v = json(&etrs(&["check", path(&fixture("tight_cut.json"))]));
    assert_eq!(v["dc"], false);
    assert_eq!(v["newdc"], true);
    assert_eq!(v["rank"], 1);
    let p = v["lifted_point"].as_array().unwrap();
    let norm: f64 = p
        .iter()
        .map(|x| x.as_f64().unwrap().powi(2))
        .sum::<f64>()
        .sqrt();
    assert!((norm - 1.0).abs() < 1e-10);

    let v = json(&etrs(&["check", path(&fixture("gap_cut.json"))]));
    assert_eq!(v["newdc"], false);
    assert_eq!(v["surrogate_value"], Value::Null);

    let v = json(&etrs(&["check", path(&fixture("ball_only.json"))]));
    assert_eq!(v["newdc"], true);
    assert!((num(&v, "surrogate_value") + 0.5).abs() < 1e-10);
}

#[test]
fn oracle_methods() {
    let v = json(&etrs(&["oracle", path(&fixture("tight_cut.json"))]));
    assert_eq!(v["method"], "kkt");
    assert!((num(&v, "value") + 1.0).abs() < 1e-10);
    let v = json(&etrs(&[
        "oracle",
        path(&fixture("gap_cut.json")),
        "--method",
        "kkt",
    ]));
    assert!(num(&v, "value").abs() < 1e-10);
    let v = json(&etrs(&[
        "oracle",
        path(&fixture("tight_cut.json")),
        "--method",
        "grid",
        "--density",
        "100",
    ]));
    assert!(num(&v, "value") <= -1.0 + 0.05);

    let big = scratch("six.json");
    std::fs::write(
        &big,
        etrs(&["gen", "random", "--n", "6", "--m", "1"]).stdout,
    )
    .unwrap();
    let out = etrs(&["oracle", path(&big), "--method", "grid"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gap_examples() {
    let v = json(&etrs(&["gap", path(&fixture("gap_cut.json"))]));
    assert!((num(&v, "gap") - 1.0).abs() < 1e-6);
    assert!(num(&v, "exact").abs() < 1e-8);
    assert!((num(&v, "surrogate") + 1.0).abs() < 1e-6);
    let v = json(&etrs(&["gap", path(&fixture("tight_cut.json"))]));
    assert!(num(&v, "gap").abs() < 1e-6);
}

#[test]
fn gap_is_never_negative() {
    for seed in 0..15 {
        let file = scratch(&format!("gap{seed}.json"));
        let m = (seed % 4).to_string();
        let s = seed.to_string();
        std::fs::write(
            &file,
            etrs(&["gen", "random", "--n", "3", "--m", &m, "--seed", &s]).stdout,
        )
        .unwrap();
        let v = json(&etrs(&["gap", path(&file)]));
        assert!(num(&v, "gap") >= -1e-6, "seed {seed}: {v}");
    }
}

#[test]
fn qps_generation_and_solve() {
    let out = etrs(&[
        "gen",
        "qps",
        "--q",
        path(&fixture("matrices/qps_identity.json")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["n"], 1);
    assert_eq!(v["A"].as_array().unwrap().len(), 2);
    let file = scratch("qps.json");
    std::fs::write(&file, &out.stdout).unwrap();
    let v = json(&etrs(&["solve", path(&file)]));
    assert!((num(&v, "value") - 0.5).abs() < 1e-8);

    let scalar = scratch("scalar.json");
    std::fs::write(&scalar, "[[1.0]]").unwrap();
    let out = etrs(&["gen", "qps", "--q", path(&scalar)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn random_generation_round_trips() {
    let args = ["gen", "random", "--n", "3", "--m", "2", "--seed", "7"];
    let first = etrs(&args).stdout;
    assert_eq!(first, etrs(&args).stdout);
    let file = scratch("gen7.json");
    std::fs::write(&file, &first).unwrap();
    let parsed: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(parsed["n"], 3);
    assert_eq!(parsed["b"].as_array().unwrap().len(), 2);
    assert_eq!(etrs(&["solve", path(&file)]).status.code(), Some(0));
}

#[test]
fn bench_tables() {
    let out = etrs(&["bench", path(&fixture(""))]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text
        .lines()
        .find(|l| l.starts_with("tight_cut.json"))
        .unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols[1], "optimal");
    assert_eq!(cols[2].parse::<f64>().unwrap(), -1.0);

    let empty = scratch("empty-dir");
    std::fs::create_dir_all(&empty).unwrap();
    let out = etrs(&["bench", path(&empty)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);

    let out = etrs(&["bench", path(&fixture("bench_infeasible"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text
        .lines()
        .any(|l| l.starts_with("outside.json") && l.contains("infeasible")));
}
