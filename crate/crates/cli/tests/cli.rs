use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
  "dataset": "synthetic",
  "task": "node",
  "train": { "epochs": 3, "model": { "hidden": 8, "embedding": 8, "adversary_hidden": 8 } },
  "classifier": { "hidden": 8, "epochs": 30 },
  "repeats": 2,
  "subsample": 60,
  "grid": { "alpha": [0.1, 1.0], "gamma": [1.0], "lambda": [1.0] }
}"#;

fn graphair(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphair"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_trial_artifacts_with_seed() {
    let dir = setup();
    let stdout = ok(graphair(dir.path(), &["run", "--config", "tiny.json", "--seed", "7", "--out", "t"]));
    assert!(stdout.contains("Graphair synthetic"), "{stdout}");
    let t = dir.path().join("t");
    for f in ["config.json", "report.json", "metrics.csv", "metadata.json", "results.csv", "checkpoint.json"] {
        assert!(t.join(f).exists(), "missing {f}");
    }
    assert_eq!(json(&t.join("report.json"))["seed"], 7);
    assert_eq!(json(&t.join("config.json"))["train"]["seed"], 7);
    let metrics = std::fs::read_to_string(t.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
}

#[test]
fn grid_workers_match_in_process_search() {
    let dir = setup();
    ok(graphair(dir.path(), &["grid", "--config", "tiny.json", "--out", "serial"]));
    let stdout = ok(graphair(dir.path(), &["grid", "--config", "tiny.json", "--jobs", "2", "--out", "parallel"]));
    assert!(stdout.contains("2 cells, 0 failed"), "{stdout}");
    let (a, b) = (json(&dir.path().join("serial/grid.json")), json(&dir.path().join("parallel/grid.json")));
    assert_eq!(a["best"], b["best"]);
    assert_eq!(a["rule_id"], b["rule_id"]);
    for id in ["alpha0.1_gamma1_lambda1", "alpha1_gamma1_lambda1"] {
        let report = |root: &str| std::fs::read(dir.path().join(root).join("cells").join(id).join("report.json")).unwrap();
        assert_eq!(report("serial"), report("parallel"), "cell {id}");
    }
    assert!(!dir.path().join("parallel/cells").read_dir().unwrap().any(|e| {
        let name = e.unwrap().file_name();
        let name = name.to_string_lossy();
        name.ends_with(".partial") || name.ends_with(".failed")
    }));
}

#[test]
fn ablate_and_plot() {
    let dir = setup();
    ok(graphair(dir.path(), &["ablate", "--config", "tiny.json", "--out", "abl"]));
    let table = std::fs::read_to_string(dir.path().join("abl/results.csv")).unwrap();
    let methods: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["Graphair", "Graphair w/o EP", "Graphair w/o FM"]);
    let stdout = ok(graphair(dir.path(), &["plot", "abl/results.csv", "--out", "figs"]));
    assert!(stdout.contains("wrote"));
    assert!(dir.path().join("figs/tradeoff.csv").exists());
    assert!(dir.path().join("figs/tradeoff_synthetic.svg").exists());
}

#[test]
fn validate_data_reports_missing_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = graphair(dir.path(), &["validate-data", "--data-dir", ".", "--dataset", "nba", "--out", "checks.json"]);
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("missing"), "{stdout}");
    assert_eq!(json(&dir.path().join("checks.json"))[0]["status"], "missing");
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.json"), r#"{"dataset": "synthetic", "epochs": 3}"#).unwrap();
    let out = graphair(dir.path(), &["run", "--config", "bad.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
