//! Black-box tests of the `ppl` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn ppl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("ppl-cli-test-{}-{name}", std::process::id()));
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn run_reports_weightless_model_with_unit_constant() {
    let out = ppl(&["run", "geometric", "-J", "2000", "--seed", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["model"], "geometric");
    assert_eq!(report["termination"], "all-values");
    assert_eq!(report["log_norm_const"], 0.0);
    assert_eq!(report["rounds"], 0);
    let posterior = report["posterior"].as_array().unwrap();
    let total: f64 = posterior.iter().map(|e| e["weight"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn run_accepts_a_source_file() {
    let path = temp_file("coin.ppl", "let p = sample_Beta(2, 2) in weight p; p");
    let out = ppl(&["run", path.to_str().unwrap(), "-J", "4000", "--seed", "3"]);
    std::fs::remove_file(&path).ok();
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    // Beta(2,2) reweighted by p is Beta(3,2): mean 0.6, Z = 1/2.
    let z = report["log_norm_const"].as_f64().unwrap().exp();
    assert!((z - 0.5).abs() < 0.02, "Z {z}");
    let mean: f64 = report["posterior"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["value"].as_f64().unwrap() * e["weight"].as_f64().unwrap())
        .sum();
    assert!((mean - 0.6).abs() < 0.02, "mean {mean}");
}

#[test]
fn csv_report_has_metadata_and_rows() {
    let out = ppl(&["run", "geometric", "-J", "500", "--seed", "2", "--format", "csv"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("# model=geometric\n"), "{text}");
    assert!(text.contains("# log_norm_const=0 "));
    assert!(text.contains("value,weight\n"));
    assert!(text.lines().any(|l| l.starts_with("1,")));
}

#[test]
fn identical_invocations_produce_identical_reports() {
    let args = ["run", "seq", "-J", "500", "--seed", "9"];
    let a = ppl(&args);
    let b = ppl(&args);
    assert!(a.status.success() && b.status.success());
    let strip_wall = |out: &Output| -> serde_json::Value {
        let mut report: serde_json::Value = serde_json::from_str(&stdout(out)).unwrap();
        report.as_object_mut().unwrap().remove("wall_ms");
        report
    };
    assert_eq!(strip_wall(&a), strip_wall(&b));
}

#[test]
fn output_flag_writes_the_report_to_a_file() {
    let path = std::env::temp_dir()
        .join(format!("ppl-cli-test-{}-report.json", std::process::id()));
    let out = ppl(&[
        "run",
        "beta",
        "-J",
        "200",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(report["model"], "beta");
}

#[test]
fn unknown_model_fails_with_usage_exit_code() {
    let out = ppl(&["run", "no-such-model"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ppl models"));
}

#[test]
fn bad_source_fails_with_usage_exit_code() {
    let path = temp_file("broken.ppl", "let = in");
    let out = ppl(&["run", path.to_str().unwrap()]);
    std::fs::remove_file(&path).ok();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("parsing"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = ppl(&["run", "geometric", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn placements_compares_strategies_from_a_spec_file() {
    let spec = temp_file(
        "placements.json",
        r#"{
            "placements": [
                {"name": "all", "after_weights": [1, 2, 3]},
                {"name": "none", "after_weights": []},
                {"name": "head", "paths": [[]]}
            ],
            "replicates": 3
        }"#,
    );
    let out = ppl(&[
        "placements",
        "seq_unrolled",
        "--spec",
        spec.to_str().unwrap(),
        "-J",
        "2000",
        "--seed",
        "5",
    ]);
    std::fs::remove_file(&spec).ok();
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = report["placements"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["resamples"], 3);
    assert_eq!(rows[1]["resamples"], 0);
    assert_eq!(rows[2]["resamples"], 1);
    assert_eq!(rows[0]["runs"].as_array().unwrap().len(), 3);
    // All strategies estimate the same constant; at these sizes they
    // agree loosely.
    let means: Vec<f64> = rows
        .iter()
        .map(|r| r["log_norm_const_mean"].as_f64().unwrap())
        .collect();
    assert!((means[0] - means[1]).abs() < 1.0, "{means:?}");
    assert!((means[0] - means[2]).abs() < 1.0, "{means:?}");
}

#[test]
fn placements_rejects_conflicting_entries() {
    let spec = temp_file(
        "bad-placements.json",
        r#"{"placements": [{"name": "x", "after_weights": [1], "paths": [[0]]}]}"#,
    );
    let out = ppl(&["placements", "seq_unrolled", "--spec", spec.to_str().unwrap()]);
    std::fs::remove_file(&spec).ok();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("both"));
}

#[test]
fn accept_list_names_all_eleven_criteria() {
    let out = ppl(&["accept", "--list"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let names: Vec<&str> = text.lines().collect();
    assert_eq!(names.len(), 11);
    assert!(names.contains(&"geometric-posterior"));
    assert!(names.contains(&"thread-determinism"));
}

#[test]
fn accept_runs_a_single_criterion() {
    let out = ppl(&["accept", "--only", "decomposition-lemma"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("PASS decomposition-lemma"), "{text}");
    assert!(text.contains("acceptance: 1/1 criteria passed"));
}

#[test]
fn accept_rejects_unknown_criterion_names() {
    let out = ppl(&["accept", "--only", "nonexistent"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--list"));
}

#[test]
fn models_lists_the_bundled_corpus() {
    let out = ppl(&["models"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["geometric", "crbd", "unit", "loop", "seq_gauss"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "missing {name}");
    }
}

#[test]
fn closed_stdout_pipe_exits_cleanly() {
    use std::io::Read;
    use std::process::Stdio;

    // Read a few bytes of the report, then close our end of the pipe. The
    // beta posterior has one entry per particle, so the report overflows the
    // pipe buffer and the binary is still writing when the pipe closes. It
    // must exit quietly (as `ppl run m | head` would demand), not panic with
    // a broken-pipe backtrace.
    let mut child = Command::new(env!("CARGO_BIN_EXE_ppl"))
        .args(["run", "beta", "-J", "20000", "--seed", "1"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    let mut pipe = child.stdout.take().unwrap();
    let mut buf = [0u8; 16];
    pipe.read_exact(&mut buf).unwrap();
    drop(pipe);
    let out = child.wait_with_output().unwrap();
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "status {:?}, stderr: {err}", out.status);
    assert!(!err.contains("panicked"), "stderr: {err}");
}
