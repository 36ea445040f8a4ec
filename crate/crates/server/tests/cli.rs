use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distractor"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("DISTRACTOR_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = bin(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(path: &Path, v: &Value) {
    std::fs::write(path, v.to_string()).unwrap();
}

#[test]
fn end_to_end_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sg = json!({"dim": 8, "epochs": 1});
    write(
        &d.join("baseline.json"),
        &json!({"resources": {"w2v": sg, "glove": sg}, "negatives": 10}),
    );
    let enc = json!({"vocab_size": 0, "d_model": 16, "layers": 1, "heads": 2, "ffn": 32, "max_len": 24, "d_out": 8});
    write(&d.join("train.json"), &json!({"batch": 8, "epochs": 1, "merges": 100, "encoder": enc}));

    ok(&["--seed", "5", "synth", "--out-dir", "data", "--topics", "3", "--per-topic", "10", "--split", "20,5,5"], d);
    for f in ["corpus.jsonl", "pool.txt", "train.jsonl", "valid.jsonl", "test.jsonl"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    let data = |f: &str| format!("data/{f}");
    ok(
        &["train-baseline", "--train", &data("train.jsonl"), "--pool", &data("pool.txt"), "--out", "m/baseline", "--params", "baseline.json"],
        d,
    );
    for kind in ["dsim", "qsim"] {
        ok(
            &[
                &format!("train-{kind}"),
                "--train", &data("train.jsonl"),
                "--valid", &data("valid.jsonl"),
                "--pool", &data("pool.txt"),
                "--out", &format!("m/{kind}"),
                "--params", "train.json",
            ],
            d,
        );
        assert!(d.join("m").join(kind).join("training_report.json").exists());
    }
    let out = bin(&["index", "--model", "m/qsim", "--pool", &data("pool.txt")], d);
    assert!(!out.status.success());
    ok(&["index", "--model", "m/dsim", "--pool", &data("pool.txt")], d);
    ok(&["index", "--model", "m/qsim", "--pool", &data("pool.txt"), "--corpus", &data("train.jsonl")], d);

    let models = ["--pool", "data/pool.txt", "--baseline", "m/baseline", "--dsim", "m/dsim", "--qsim", "m/qsim"];
    let curve: Value = serde_json::from_str(&ok(
        &[&["sweep-alpha"][..], &models, &["--valid", &data("valid.jsonl"), "--out", "curve.json"]].concat(),
        d,
    ))
    .unwrap();
    assert_eq!(curve["grid"].as_array().unwrap().len(), 11);

    let mut runs = Vec::new();
    for kind in ["baseline", "dsim", "qsim", "dqsim"] {
        let run = format!("runs/{kind}.jsonl");
        ok(
            &[&["rank", "--model", kind, "--corpus", &data("test.jsonl"), "--out", &run, "--depth", "20"][..], &models].concat(),
            d,
        );
        runs.push(run);
    }
    let one: Value = serde_json::from_str(&ok(
        &[&["rank", "--model", "dqsim", "--stem", "Which one?", "--key", "answer", "-k", "3"][..], &models].concat(),
        d,
    ))
    .unwrap();
    assert_eq!(one["entries"].as_array().unwrap().len(), 3);

    let mut args = vec!["evaluate", "--corpus", "data/test.jsonl", "--pool", "data/pool.txt", "--run"];
    args.extend(runs.iter().map(String::as_str));
    let table = ok(&args, d);
    for kind in ["baseline", "dsim", "qsim", "dqsim"] {
        assert!(table.contains(kind), "{table}");
    }
    args.push("--json");
    let reports: Value = serde_json::from_str(&ok(&args, d)).unwrap();
    assert_eq!(reports["dsim"]["queries"], 5);
}

#[test]
fn errors_exit_nonzero_with_json_on_demand() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["--json-errors", "evaluate", "--run", "x.jsonl", "--corpus", "c.jsonl", "--pool", "p.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"]["kind"], "io");

    let out = bin(&["agreement", "--data-dir", ".", "--rater-a", "a", "--rater-b", "a"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    write(&dir.path().join("cfg.json"), &json!({"default_k": 0}));
    let out = bin(&["--config", "cfg.json", "--json-errors", "agreement", "--rater-a", "a", "--rater-b", "b"], dir.path());
    let err: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_config");
}

#[test]
fn ingest_filters_records() {
    let dir = tempfile::tempdir().unwrap();
    let lines = [
        json!({"id": "a", "stem": "Capital of France?", "key": "Paris", "distractors": ["Rome", "paris", "Berlin"]}),
        json!({"id": "b", "stem": "Only the key", "key": "x", "distractors": ["X"]}),
    ];
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(dir.path().join("raw.jsonl"), text).unwrap();
    ok(&["ingest", "--input", "raw.jsonl", "--out", "clean.jsonl", "--pool", "pool.txt"], dir.path());
    let clean = std::fs::read_to_string(dir.path().join("clean.jsonl")).unwrap();
    assert_eq!(clean.lines().count(), 1);
    let pool = std::fs::read_to_string(dir.path().join("pool.txt")).unwrap();
    assert_eq!(pool.lines().collect::<Vec<_>>(), vec!["berlin", "paris", "rome"]);
}
