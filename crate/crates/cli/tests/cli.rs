use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn ledp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ledp"))
        .args(args)
        .env_remove("LEDP_WORKERS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn gadget_example() {
    let out = ledp(&["gadget", "--bits", "101"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["tool"], "ledp");
    assert_eq!(v["subcommand"], "gadget");
    assert_eq!(v["result"]["n"], 3);
    assert_eq!(v["result"]["s"], 2);
    assert_eq!(v["result"]["t"], 6);
}

#[test]
fn output_file_gets_report_and_stdout_gets_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    let out = ledp(&["gadget", "--bits", "101", "--output", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "gadget: n=3 S=2 T=6\n");
    let csv = fs::read_to_string(&path).unwrap();
    assert_eq!(csv, "n,s,t,epsilon,trials,mean_baseline,mean_via_triangles\n3,2,6,,,,\n");
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"subcommand": "gadget", "bits": "11", "seed": 5}"#).unwrap();
    let c = cfg.to_str().unwrap();

    let v = json(&ledp(&["--config", c, "gadget"]));
    assert_eq!(v["seed"], 5);
    assert_eq!(v["result"]["t"], 4);

    let v = json(&ledp(&["gadget", "--config", c, "--bits", "111", "--seed", "9"]));
    assert_eq!(v["seed"], 9);
    assert_eq!(v["result"]["t"], 9);
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dir.path().join("u.json");
    fs::write(&unknown, r#"{"bogus": 1}"#).unwrap();
    let out = ledp(&["gadget", "--config", unknown.to_str().unwrap(), "--bits", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let wrong = dir.path().join("w.json");
    fs::write(&wrong, r#"{"subcommand": "attack"}"#).unwrap();
    assert_eq!(ledp(&["gadget", "--config", wrong.to_str().unwrap(), "--bits", "1"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(ledp(&["estimate", "--family", "complete", "--eps", "1"]).status.code(), Some(2));
    assert_eq!(ledp(&["estimate", "--family", "complete", "--n", "4", "--eps", "-1"]).status.code(), Some(2));
    assert_eq!(ledp(&["gadget", "--bits", "10x"]).status.code(), Some(2));
    assert_eq!(ledp(&["gadget", "--bits", "1", "--workers", "0"]).status.code(), Some(2));
    assert_eq!(ledp(&["estimate", "--graph", "/nonexistent/graph.txt", "--eps", "1"]).status.code(), Some(1));
    let infeasible = ledp(&["attack", "--n", "2", "--k", "500", "--eps", "0.05"]);
    assert_eq!(infeasible.status.code(), Some(3));
    assert_eq!(json(&infeasible)["result"]["feasible"], false);
    let feasible = ledp(&["attack", "--n", "3", "--k", "2000", "--mechanism", "oracle"]);
    assert_eq!(feasible.status.code(), Some(0));
    assert_eq!(json(&feasible)["result"]["hamming"], 0);
}

#[test]
fn workers_env_is_honoured_and_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_ledp"))
        .args(["gadget", "--bits", "1"])
        .env("LEDP_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_ledp"))
        .args(["gadget", "--bits", "1"])
        .env("LEDP_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn csv_format_is_inferred_from_extension() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    let out = ledp(&[
        "estimate", "--family", "cycle", "--n", "5", "--eps", "1", "--trials", "4", "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("trial,t_hat\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn estimate_reads_graph_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k4.txt");
    fs::write(&path, "4\n0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n").unwrap();
    let v = json(&ledp(&["estimate", "--graph", path.to_str().unwrap(), "--eps", "2", "--trials", "10", "--transcript"]));
    assert_eq!(v["result"]["t_exact"], 4);
    assert_eq!(v["result"]["edges"], 6);
    assert_eq!(v["result"]["estimates"].as_array().unwrap().len(), 10);
    assert_eq!(v["result"]["transcript"]["entries"].as_array().unwrap().len(), 4);
}

#[test]
fn selftest_passes() {
    let out = ledp(&["selftest", "--trials", "2000"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["passed"], true);
}
