//! End-to-end runs of the `kits` binary.

use std::path::Path;
use std::process::{Command, Output};

use kits::metrics::MetricsReport;

const SMALL: &[&str] =
    &["--dim", "4", "--batch-size", "2", "--window", "6", "--batches-per-epoch", "2", "--epochs", "2"];

fn kits(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kits")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = kits(args);
    assert!(out.status.success(), "{:?} failed: {}", args, String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_metrics(p: &Path) -> MetricsReport {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn train_writes_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--dataset", "synth:20:300", "--alpha", "0.5", "--strategy", "increment"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--out", path(&out)]);
    let stdout = ok(&args).stdout;

    for f in ["metrics.json", "history.jsonl", "model.ckpt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let m = read_metrics(&out.join("metrics.json"));
    assert!(m.mae.is_finite() && m.n_points > 0);
    let printed: MetricsReport = serde_json::from_slice(&stdout).unwrap();
    assert_eq!(printed.mae, m.mae);
    let history = std::fs::read_to_string(out.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);
    for line in history.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["train_loss"].is_f64() && v["val_mae"].is_f64());
    }
}

#[test]
fn repeated_runs_are_byte_identical_and_evaluate_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for r in &runs {
        let mut args = vec!["train", "--dataset", "synth:20:300", "--strategy", "decrement", "--seed", "3"];
        args.extend_from_slice(SMALL);
        args.extend_from_slice(&["--out", path(r)]);
        ok(&args);
    }
    for f in ["metrics.json", "history.jsonl", "model.ckpt"] {
        assert_eq!(std::fs::read(runs[0].join(f)).unwrap(), std::fs::read(runs[1].join(f)).unwrap(), "{f} differs");
    }

    let eval = dir.path().join("eval");
    let ckpt = runs[0].join("model.ckpt");
    ok(&[
        "evaluate",
        "--dataset",
        "synth:20:300",
        "--seed",
        "3",
        "--window",
        "6",
        "--checkpoint",
        path(&ckpt),
        "--out",
        path(&eval),
    ]);
    assert_eq!(read_metrics(&eval.join("metrics.json")), read_metrics(&runs[0].join("metrics.json")));
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"dataset": "synth:20:300", "train.dim": 4, "train.batch_size": 2, "train.window": 6,
            "train.batches_per_epoch": 2, "train.epochs": 5}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    ok(&["train", "--config", path(&cfg), "--epochs", "1", "--out", path(&out)]);
    let history = std::fs::read_to_string(out.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 1, "the --epochs flag overrides the file");
}

#[test]
fn synth_files_feed_the_other_commands() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--nodes", "25", "--steps", "200", "--out", path(&data)]);
    let (readings, topology) = (data.join("readings.csv"), data.join("topology.csv"));

    for method in ["mean", "knn", "okriging"] {
        let out = dir.path().join(method);
        ok(&[
            "baseline",
            "--dataset",
            path(&readings),
            "--topology",
            path(&topology),
            "--method",
            method,
            "--out",
            path(&out),
        ]);
        assert!(read_metrics(&out.join("metrics.json")).mae.is_finite());
    }

    let gap = dir.path().join("gap");
    ok(&[
        "graph-gap",
        "--dataset",
        path(&readings),
        "--topology",
        path(&topology),
        "--batches",
        "50",
        "--out",
        path(&gap),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(gap.join("graph_gap.json")).unwrap()).unwrap();
    assert_eq!(report["n_batches"], 50);
    assert_eq!(report["inference_nodes"], 25);
}

#[test]
fn transfer_trains_on_the_source_or_reuses_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let trained = dir.path().join("trained");
    let mut args = vec!["transfer", "--source", "synth:20:300:1", "--dataset", "synth:30:300:4"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--out", path(&trained)]);
    ok(&args);
    assert!(trained.join("model.ckpt").is_file());

    let reused = dir.path().join("reused");
    let ckpt = trained.join("model.ckpt");
    ok(&[
        "transfer",
        "--checkpoint",
        path(&ckpt),
        "--dataset",
        "synth:30:300:4",
        "--window",
        "6",
        "--out",
        path(&reused),
    ]);
    assert_eq!(read_metrics(&reused.join("metrics.json")), read_metrics(&trained.join("metrics.json")));
    assert!(!reused.join("model.ckpt").exists());

    assert_eq!(kits(&["transfer", "--dataset", "synth:30:300:4"]).status.code(), Some(1));
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = path(&out);
    // configuration
    assert_eq!(kits(&["train", "--alpha", "1.5", "--out", o]).status.code(), Some(1));
    assert_eq!(kits(&["train", "--epochs", "2", "--patience", "5", "--out", o]).status.code(), Some(1));
    assert_eq!(kits(&["train", "--no-such-flag"]).status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"train.speed": 1}"#).unwrap();
    assert_eq!(kits(&["train", "--config", path(&bad), "--out", o]).status.code(), Some(1));
    // data
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        kits(&["train", "--dataset", path(&missing), "--topology", path(&missing), "--out", o]).status.code(),
        Some(2)
    );
    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    // an unreadable checkpoint is a configuration problem, not a data one
    let code =
        kits(&["evaluate", "--dataset", "synth:20:300", "--checkpoint", path(&garbage), "--out", o]).status.code();
    assert_eq!(code, Some(1));
}
