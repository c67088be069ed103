//! End-to-end runs of the binary: exit codes, output shapes and
//! byte-stability of the structured format.

use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../tcfisher/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcfisher"))
        .args(args)
        .env_remove("TCFISHER_NUMERIC")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

#[test]
fn solve_reports_prices_and_passes() {
    let inst = fixture("irrational_equilibrium.json");
    let out = run(&["solve", inst.to_str().unwrap(), "--epsilon", "0.001"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("price j"), "{text}");
    assert!(text.contains("overall: pass"), "{text}");
    // both prices near 1/sqrt(2)
    for line in text.lines().filter(|l| l.starts_with("price")) {
        let value: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
        assert!((value - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01, "{line}");
    }
}

#[test]
fn verify_accepts_inline_vectors() {
    let inst = fixture("single_pair.json");
    let out = run(&[
        "verify",
        inst.to_str().unwrap(),
        "--prices",
        "[1]",
        "--alloc",
        "[[1]]",
        "--exact",
    ]);
    assert!(out.status.success());

    // overselling at a high price fails the approximate clearing condition
    let out = run(&[
        "verify",
        inst.to_str().unwrap(),
        "--prices",
        "[2]",
        "--alloc",
        "[[0.5]]",
        "--epsilon",
        "0.1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL relaxed-clearing"));
}

#[test]
fn zero_epsilon_is_a_usage_error() {
    let inst = fixture("irrational_equilibrium.json");
    let out = run(&["solve", inst.to_str().unwrap(), "--epsilon", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flags_are_usage_errors() {
    let out = run(&["solve", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn structured_output_is_byte_stable() {
    let inst = fixture("one_good_two_costs.json");
    let args = [
        "solve",
        inst.to_str().unwrap(),
        "--format",
        "structured",
        "-N",
        "exact",
        "--epsilon",
        "1/50",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    // exact mode renders rationals as strings
    let doc: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(doc["prices"][0].is_string());
    assert!(doc["verification"]["pass"].as_bool().unwrap());
}

#[test]
fn solve_result_feeds_back_into_verify() {
    let dir = std::env::temp_dir().join(format!("tcfisher-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let result_path = dir.join("result.json");
    let inst = fixture("single_pair.json");
    let out = run(&[
        "solve",
        inst.to_str().unwrap(),
        "--format",
        "structured",
    ]);
    assert!(out.status.success());
    std::fs::write(&result_path, &out.stdout).unwrap();

    let out = run(&[
        "verify",
        inst.to_str().unwrap(),
        "--result",
        result_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn env_var_selects_numeric_mode() {
    let inst = fixture("single_pair.json");
    let out = Command::new(env!("CARGO_BIN_EXE_tcfisher"))
        .args(["solve", inst.to_str().unwrap(), "--format", "structured"])
        .env("TCFISHER_NUMERIC", "exact")
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["prices"][0].is_string(), "exact mode renders rationals");
}

#[test]
fn gen_is_deterministic_and_valid() {
    let args = ["gen", "--family", "blocked-random", "-n", "4", "-m", "3", "--seed", "9", "--q", "0.4"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("blocked"), "seed 9 should block something");

    // generated instances parse and solve
    let dir = std::env::temp_dir().join(format!("tcfisher-gen-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("gen.json");
    std::fs::write(&path, &a.stdout).unwrap();
    let out = run(&["solve", path.to_str().unwrap(), "--epsilon", "0.05"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn trace_file_holds_one_record_per_event() {
    let dir = std::env::temp_dir().join(format!("tcfisher-trace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let trace_path = dir.join("trace.jsonl");
    let inst = fixture("single_pair.json");
    let out = run(&[
        "solve",
        inst.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    let records: Vec<serde_json::Value> = trace
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(records.len() > 2);
    assert_eq!(records.last().unwrap()["event"], "no_surplus_node");
    for r in &records {
        assert!(r["surplus_digest"].is_string());
        assert!(r["round"].is_u64());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bench_emits_table_and_report() {
    let out = run(&[
        "bench",
        "--family",
        "uniform-random",
        "-n",
        "3",
        "-m",
        "2",
        "--seed",
        "1",
        "--count",
        "3",
        "--epsilon",
        "0.05",
        "-N",
        "exact",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("overall: pass"), "{text}");
    assert!(text.contains("aggregate:"), "{text}");
}

#[test]
fn oracle_prints_kkt_residuals() {
    let inst = fixture("one_good_two_costs.json");
    let out = run(&["oracle", inst.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("kkt residuals"), "{text}");
    let price_line = text.lines().find(|l| l.starts_with("price")).unwrap();
    let value: f64 = price_line.split_whitespace().last().unwrap().parse().unwrap();
    assert!((value - 1.78078).abs() < 1e-4);
}
