use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kangrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kangrid"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dry_run_prints_resolved_config_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = kangrid(&["run", "--experiment", "synthetic", "--seeds", "4,5", "--out", path(&out_dir), "--dry-run"]);
    assert!(out.status.success());
    let resolved: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(resolved["schema_version"], 1);
    assert_eq!(resolved["seeds"], serde_json::json!([4, 5]));
    assert_eq!(resolved["strategy"], "both");
    assert_eq!(resolved["tasks"].as_array().unwrap().len(), 10);
    assert_eq!(resolved["train"]["grid_schedule"][0]["iteration"], 500);
    assert!(!out_dir.exists());
}

#[test]
fn config_errors_are_listed_before_anything_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "experiment": "feynman", "seeds": [], "tasks": ["I.6.2", "nope"],
            "curvature": {"epsilon": 0}}"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = kangrid(&["run", "--config", path(&cfg), "--scale", "2", "--strategy", "all", "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    for needle in ["seeds must not be empty", "unknown task \"nope\"", "epsilon", "scale must lie", "unknown strategy"] {
        assert!(err.contains(needle), "missing {needle:?} in\n{err}");
    }
    assert!(!out_dir.exists());

    fs::write(&cfg, r#"{"experiment": "gaussian", "learning_rate": 0.1}"#).unwrap();
    let out = kangrid(&["run", "--config", path(&cfg), "--dry-run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gaussian_run_writes_artifacts_and_reports_idempotently() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("gauss");
    let out = kangrid(&[
        "run", "--experiment", "gaussian", "--strategy", "both", "--seeds", "0,1", "--scale", "0.05", "--out", path(&dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["report.json", "report.csv", "resolved_config.json", "cells.json", "fig_gaussian.svg"] {
        assert!(dir.join(name).exists(), "{name} missing");
    }
    for strategy in ["input", "curvature"] {
        for seed in [0, 1] {
            let id = format!("gaussian_{strategy}_s{seed}");
            let trace = fs::read_to_string(dir.join(format!("trace_{id}.csv"))).unwrap();
            assert!(trace.starts_with("iteration,loss,grid_G,wall_clock_ms"));
            // 100 iterations at scale 0.05, grid 10 from iteration 50
            assert_eq!(trace.lines().count(), 101);
            assert!(trace.lines().nth(51).unwrap().split(',').nth(2) == Some("10"));
            assert!(dir.join(format!("checkpoint_{id}.json")).exists());
        }
    }

    let first = kangrid(&["report", path(&dir)]);
    let second = kangrid(&["report", path(&dir)]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let table = stdout(&first);
    assert_eq!(table.lines().filter(|l| l.starts_with("gaussian")).count(), 1);
    assert!(table.contains("Input-Based") && table.contains("Curvature-Based") && table.contains("Improv."));
    assert!(table.ends_with(&stdout(&out)[stdout(&out).len() - table.len()..]));

    // rerunning the resolved config reproduces the table exactly
    let again = tmp.path().join("again");
    let rerun = kangrid(&["run", "--config", path(&dir.join("resolved_config.json")), "--out", path(&again)]);
    assert!(rerun.status.success());
    assert_eq!(kangrid(&["report", path(&again)]).stdout, first.stdout);

    fs::remove_file(dir.join("fig_gaussian.svg")).unwrap();
    let plotted = kangrid(&["plot", path(&dir)]);
    assert!(plotted.status.success());
    let svg = fs::read_to_string(dir.join("fig_gaussian.svg")).unwrap();
    assert!(svg.contains("<polyline") && svg.contains("curvature-based knots"));
}

#[test]
fn helmholtz_trace_follows_the_scaled_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("helmholtz.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "experiment": "helmholtz", "helmholtz": [[1, 1]], "strategy": "curvature",
            "seeds": [0], "scale": 0.01}"#,
    )
    .unwrap();
    let dir = tmp.path().join("helm");
    let out = kangrid(&["run", "--config", path(&cfg), "--out", path(&dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.join("trace_helmholtz_1_1_curvature_s0.csv")).unwrap();
    let grids: Vec<(usize, usize)> = trace
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(grids.len(), 50);
    let changes: Vec<(usize, usize)> = grids.windows(2).filter(|w| w[0].1 != w[1].1).map(|w| w[1]).collect();
    assert_eq!(changes, vec![(10, 6), (20, 9), (30, 12)]);
    assert!(!dir.join("fig_helmholtz_1_1.svg").exists());
}

#[test]
fn report_rejects_other_artifact_versions() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("report.json"), r#"{"artifact_version": 7}"#).unwrap();
    let out = kangrid(&["report", path(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("artifact version 7"));

    let missing = kangrid(&["report", path(&tmp.path().join("nowhere"))]);
    assert!(!missing.status.success());
}
