use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dotanneal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dotanneal")).args(args).env("DOTANNEAL_OUTPUT_DIR", dir).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

fn assert_usage_error(out: &Output) {
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("dotanneal: error:") && stderr.trim_end().lines().count() == 1, "{stderr}");
}

#[test]
fn ising_action_at_desk_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = dotanneal(dir.path(), &["action", "--model", "ising", "--n", "4", "--beta", "1"]);
    assert!(out.status.success());
    let v = json(&dir.path().join("action.json"));
    assert_eq!(v["schema"], "dotanneal.action.v1");
    assert!(f(&v["action"]) > 0.0 && f(&v["action"]) <= 16.0);
    assert_eq!(f(&v["bound"]["value"]), 64.0);
    assert_eq!(v["within_bound"], true);
    assert_eq!(v["nodes"].as_array().unwrap().len(), 201);
}

#[test]
fn infinite_temperature_action_vanishes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dotanneal(dir.path(), &["action", "--model", "ising", "--n", "2", "--beta", "0"]);
    assert!(out.status.success());
    assert_eq!(f(&json(&dir.path().join("action.json"))["action"]), 0.0);
}

#[test]
fn potts_action_is_below_constructive_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = dotanneal(dir.path(), &["action", "--model", "potts", "--n", "5", "--q", "3", "--beta", "1.5", "--grid", "51"]);
    assert!(out.status.success());
    let v = json(&dir.path().join("action.json"));
    assert!(f(&v["action"]) <= f(&v["bound"]["value"]));
    for node in v["nodes"].as_array().unwrap() {
        assert!(f(&node["metric_derivative_sq"]) <= f(&node["constructive_cost"]) * (1.0 + 1e-12));
    }
}

#[test]
fn potts_below_the_spinodal_is_a_precondition_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_usage_error(&dotanneal(dir.path(), &["action", "--model", "potts", "--n", "5", "--q", "3", "--beta", "1.0"]));
    assert_usage_error(&dotanneal(dir.path(), &["anneal", "--model", "potts", "--n", "5", "--q", "3", "--beta", "1.0"]));
}

#[test]
fn invalid_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_usage_error(&dotanneal(dir.path(), &["action", "--model", "ising", "--n", "0", "--beta", "1"]));
    assert_usage_error(&dotanneal(dir.path(), &["anneal", "--model", "ising", "--n", "3", "--beta", "1", "--eps", "1.5"]));
    assert_usage_error(&dotanneal(dir.path(), &["action", "--model", "ising", "--n", "3", "--beta", "1", "--grid", "10"]));
    // Parser errors come from clap and use the same exit code.
    assert_eq!(dotanneal(dir.path(), &["action", "--model", "heisenberg", "--n", "3", "--beta", "1"]).status.code(), Some(2));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn exact_ising_anneal_reaches_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dotanneal(dir.path(), &["anneal", "--model", "ising", "--n", "4", "--beta", "1", "--eps", "0.3"]);
    assert!(out.status.success());
    let v = json(&dir.path().join("anneal.json"));
    assert_eq!(v["space"], "full");
    assert!(f(&v["kl"]) <= 0.3);
    assert_eq!(v["bound_holds"], true);
    let total: f64 = v["marginal"].as_array().unwrap().iter().map(|r| f(&r["probability"])).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn zero_horizon_keeps_the_uniform_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = dotanneal(dir.path(), &["anneal", "--model", "ising", "--n", "3", "--beta", "1", "--horizon", "0"]);
    assert!(out.status.success());
    let v = json(&dir.path().join("anneal.json"));
    let rows = v["marginal"].as_array().unwrap();
    assert!(rows.iter().all(|r| f(&r["probability"]) == 0.125));
    // KL(target || uniform) computed from the reported target column.
    let expected: f64 = rows.iter().map(|r| f(&r["target"])).map(|t| t * (t / 0.125).ln()).sum();
    assert!((f(&v["kl"]) - expected).abs() < 1e-12);
}

#[test]
fn sampling_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let path = dir.path().join(name);
        let out = dotanneal(
            dir.path(),
            &[
                "anneal",
                "--model",
                "ising",
                "--n",
                "3",
                "--beta",
                "1",
                "--mode",
                "sample",
                "--seed",
                seed,
                "--replicates",
                "500",
                "--output",
                path.to_str().unwrap(),
            ],
        );
        assert!(out.status.success());
        std::fs::read(path).unwrap()
    };
    let (a, b, c) = (run("11", "a.json"), run("11", "b.json"), run("12", "c.json"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let v: Value = serde_json::from_slice(&a).unwrap();
    let counted: u64 = v["counts"].as_array().unwrap().iter().map(|r| r["count"].as_u64().unwrap()).sum();
    assert_eq!(counted, 500);
}

#[test]
fn projected_potts_anneal_reaches_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        dotanneal(dir.path(), &["anneal", "--model", "potts", "--n", "5", "--q", "3", "--beta", "1.5", "--eps", "0.5", "--format", "csv"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("anneal.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("state,label,probability,target"));
    assert_eq!(lines.count(), 5);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let kl: f64 = stdout.split("KL = ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(kl <= 0.5, "{stdout}");
}

#[test]
fn verification_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["metric-axioms", "duality", "transport-inequalities", "girsanov", "landscape", "greedy-flux"] {
        let out = dotanneal(dir.path(), &["verify", suite, "--instances", "50"]);
        assert!(out.status.success(), "{suite}: {}", String::from_utf8_lossy(&out.stdout));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.lines().all(|l| l.starts_with("PASS ") && l.ends_with("s)")), "{stdout}");
    }
    let report = dir.path().join("symmetry.json");
    let out = dotanneal(dir.path(), &["verify", "symmetry", "--model", "ising", "--n", "6", "--output", report.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json(&report);
    assert_eq!(v["pass"], true);
    assert_eq!(v["checks"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert!(dotanneal(dir.path(), &["verify", "duality", "--seed", "5", "--output", p.to_str().unwrap()]).status.success());
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn ising_landscape_is_mirror_symmetric_with_two_peaks() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dotanneal(dir.path(), &["landscape", "--model", "ising", "--n", "50", "--beta", "2"]).status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("landscape.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["m", "probability", "log_probability"]);
    let rows: Vec<(i64, f64)> = rdr.records().map(|r| r.unwrap()).map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    assert_eq!(rows.len(), 51);
    for (a, b) in rows.iter().zip(rows.iter().rev()) {
        assert_eq!(a.0, -b.0);
        assert_eq!(a.1, b.1);
    }
    let peak = rows.iter().max_by(|a, b| a.1.partial_cmp(&b.1).unwrap()).unwrap();
    assert!(peak.0.abs() as f64 > 50.0 * 0.5f64.sqrt());
    let center = rows.iter().find(|r| r.0 == 0).unwrap().1;
    assert!(center < peak.1 * 1e-6);
}

#[test]
fn potts_diagonal_slice_lists_every_point() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dotanneal(dir.path(), &["landscape", "--model", "potts", "--n", "9", "--q", "3", "--beta", "1.5"]).status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("landscape.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["k", "magnetization", "orbit_size", "log_weight", "probability"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[3][1], "3;3;3");
}

#[test]
fn sorted_potts_slice_is_a_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sorted.csv");
    let out = dotanneal(
        dir.path(),
        &["landscape", "--model", "potts", "--n", "6", "--q", "3", "--beta", "2", "--slice", "sorted", "--output", path.to_str().unwrap()],
    );
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let total: f64 = rdr.records().map(|r| r.unwrap()[4].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn closed_form_horizon_is_ising_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dotanneal(dir.path(), &["anneal", "--model", "ising", "--n", "3", "--beta", "0.5", "--horizon-rule", "closed-form"]);
    assert!(out.status.success());
    let v = json(&dir.path().join("anneal.json"));
    // T = 2 n⁵ β² / ε and N = ⌈48 n⁵ β³ / ε²⌉ at n = 3, β = 0.5, ε = 0.3.
    assert!((f(&v["horizon"]) - 405.0).abs() < 1e-9);
    assert_eq!(v["layers"].as_u64(), Some(16_200));
    assert!(f(&v["kl"]) <= 0.3);
    assert_usage_error(&dotanneal(
        dir.path(),
        &["anneal", "--model", "potts", "--n", "4", "--q", "3", "--beta", "2", "--horizon-rule", "closed-form"],
    ));
}
