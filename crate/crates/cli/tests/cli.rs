mod common;

use std::fs;
use std::path::Path;

use serde_json::Value;
use tempfile::TempDir;

use common::{run, run_ok, run_pipeline, snapshot, stderr, FIXTURE_CONFIG};
use rumorstance_core::matrix_file::{read_matrix, FeatureSidecar, FEATURE_MAGIC};

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn train_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "train",
        "--config",
        FIXTURE_CONFIG,
        "--data",
        "corpus.json",
        "--features",
        "feat.fv",
        "--epochs",
        "3",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    args
}

/// A directory holding the prepared corpus and its features.
fn featurized() -> TempDir {
    let dir = TempDir::new().unwrap();
    run_pipeline(dir.path(), "features").unwrap();
    dir
}

#[test]
fn prepare_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        run_pipeline(d.path(), "prepare").unwrap();
    }
    let outputs = ["corpus.json", "corpus.vocab", "corpus.report.json"];
    assert_eq!(snapshot(a.path(), &outputs), snapshot(b.path(), &outputs));
    let report = json(&a.path().join("corpus.report.json"));
    assert_eq!(report["source"], "fixture");
    assert_eq!(report["splits"]["train"]["threads"], 6);
}

#[test]
fn prepare_from_a_missing_directory_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["prepare", "--data", "no/such/dir", "--out", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no/such/dir"), "{}", stderr(&out));
    assert!(!dir.path().join("c.json").exists());
}

#[test]
fn missing_arguments_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["prepare", "--out", "c.json"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["evaluate", "--task", "C"]).status.code(), Some(2));
}

#[test]
fn missing_lexicon_exits_2_and_names_it() {
    let dir = featurized();
    fs::remove_file(dir.path().join("res/lexicons/afinn.tsv")).unwrap();
    let out = run(
        dir.path(),
        &[
            "features",
            "--data",
            "corpus.json",
            "--lexicons",
            "res/lexicons",
            "--embeddings",
            "res/embeddings.txt",
            "--out",
            "f2.fv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("afinn.tsv"), "{}", stderr(&out));
}

#[test]
fn feature_rows_are_441_wide_and_keyed() {
    let dir = featurized();
    let (m, side): (_, FeatureSidecar) = read_matrix(&dir.path().join("feat.fv"), FEATURE_MAGIC).unwrap();
    assert_eq!(m.cols, 441);
    assert_eq!(side.dim, 441);
    assert_eq!(side.rows.len(), m.rows);
    let report = json(&dir.path().join("corpus.report.json"));
    let posts: u64 = ["train", "dev", "test"].iter().map(|s| report["splits"][s]["posts"].as_u64().unwrap()).sum();
    assert_eq!(m.rows as u64, posts);
}

#[test]
fn lambda_zero_leaves_the_stance_head_without_gradient() {
    let dir = featurized();
    run_ok(dir.path(), &train_args("pool", &["--lambda", "0", "--max-steps", "4"]));
    let log = jsonl(&dir.path().join("pool/run0/train_log.jsonl"));
    assert_eq!(log.len(), 4);
    for step in &log {
        assert_eq!(step["stance_head_grad_norm"], 0.0);
        assert_eq!(step["loss"], step["loss_veracity"]);
        assert!(step["grad_norm"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn repeated_training_gives_identical_logs() {
    let dir = featurized();
    run_ok(dir.path(), &train_args("a", &[]));
    run_ok(dir.path(), &train_args("b", &[]));
    for f in ["run0/train_log.jsonl", "run0/dev_log.jsonl", "run1/train_log.jsonl", "pool.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let a = jsonl(&dir.path().join("a/run0/train_log.jsonl"));
    let c = {
        run_ok(dir.path(), &train_args("c", &["--seed", "40"]));
        jsonl(&dir.path().join("c/run0/train_log.jsonl"))
    };
    assert_ne!(a, c, "a different seed should change the trace");
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = featurized();
    fs::write(dir.path().join("bad.json"), r#"{"seed": 1, "encoder_kind": "identity", "lamda": 0.5}"#).unwrap();
    let out = run(
        dir.path(),
        &["train", "--config", "bad.json", "--data", "corpus.json", "--features", "feat.fv", "--out", "p"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lamda"), "{}", stderr(&out));
}

#[test]
fn pool_of_one_gives_a_one_member_ensemble() {
    let dir = featurized();
    run_ok(dir.path(), &train_args("pool", &["--pool-max", "1"]));
    assert_eq!(json(&dir.path().join("pool/pool.json"))["members"].as_array().unwrap().len(), 1);
    run_ok(dir.path(), &["ensemble", "--pool", "pool", "--task", "B", "--out", "ens.json"]);
    let m = json(&dir.path().join("ens.json"));
    assert_eq!(m["members"].as_array().unwrap().len(), 1);
    assert!(m["trace"].as_array().unwrap().is_empty());
    assert_eq!(m["accepted_f1"].as_array().unwrap().len(), 1);
}

#[test]
fn ensemble_selection_is_seeded() {
    let dir = featurized();
    run_ok(dir.path(), &train_args("pool", &[]));
    for out in ["e1.json", "e2.json"] {
        run_ok(dir.path(), &["ensemble", "--pool", "pool", "--task", "stance", "--seed", "9", "--out", out]);
    }
    let a = fs::read(dir.path().join("e1.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("e2.json")).unwrap());
    let m = json(&dir.path().join("e1.json"));
    let f1: Vec<f64> = m["accepted_f1"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(f1.windows(2).all(|w| w[1] > w[0]), "{f1:?}");
}

#[test]
fn single_model_and_one_member_ensemble_predict_alike() {
    let dir = featurized();
    run_ok(dir.path(), &train_args("pool", &["--pool-max", "1"]));
    run_ok(dir.path(), &["ensemble", "--pool", "pool", "--task", "A", "--out", "ens.json"]);
    let common = ["--data", "corpus.json", "--features", "feat.fv", "--split", "dev"];
    let mut single = vec!["predict", "--model", "pool/best.tad", "--out", "single.jsonl"];
    single.extend_from_slice(&common);
    let mut ens = vec!["predict", "--ensemble", "ens.json", "--out", "ens.jsonl"];
    ens.extend_from_slice(&common);
    run_ok(dir.path(), &single);
    run_ok(dir.path(), &ens);
    let a = fs::read(dir.path().join("single.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, fs::read(dir.path().join("ens.jsonl")).unwrap());
}

#[test]
fn tampered_checkpoint_is_refused() {
    let dir = featurized();
    run_ok(dir.path(), &train_args("pool", &["--pool-max", "1"]));
    run_ok(dir.path(), &["ensemble", "--pool", "pool", "--task", "A", "--out", "ens.json"]);
    let m = json(&dir.path().join("ens.json"));
    let ck = dir.path().join(m["members"][0]["checkpoint"].as_str().unwrap());
    let mut bytes = fs::read(&ck).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&ck, bytes).unwrap();
    let out = run(
        dir.path(),
        &["predict", "--ensemble", "ens.json", "--data", "corpus.json", "--features", "feat.fv", "--out", "p.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("hash"), "{}", stderr(&out));
}

fn write_lines(path: &Path, lines: &[Value]) {
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).unwrap();
}

fn evaluate(dir: &Path, task: &str) -> Value {
    run_ok(dir, &["evaluate", "--preds", "preds.jsonl", "--gold", "gold.jsonl", "--task", task, "--out", "r.json"]);
    json(&dir.join("r.json"))[0].clone()
}

#[test]
fn perfect_predictions_score_one() {
    let dir = TempDir::new().unwrap();
    let stance = ["support", "comment", "deny", "query", "comment"];
    let veracity = ["true", "false", "unverified"];
    let mut gold = Vec::new();
    let mut preds = Vec::new();
    for (i, s) in stance.iter().enumerate() {
        gold.push(serde_json::json!({"id": format!("p{i}"), "task": "A", "gold": s}));
        preds.push(serde_json::json!({"id": format!("p{i}"), "task": "A", "pred": s}));
    }
    for (i, v) in veracity.iter().enumerate() {
        gold.push(serde_json::json!({"id": format!("t{i}"), "task": "B", "gold": v}));
        preds.push(serde_json::json!({"id": format!("t{i}"), "task": "B", "pred": v, "confidence": 1.0}));
    }
    write_lines(&dir.path().join("gold.jsonl"), &gold);
    write_lines(&dir.path().join("preds.jsonl"), &preds);
    let a = evaluate(dir.path(), "A");
    assert_eq!(a["macro_f1"], 1.0);
    assert_eq!(a["n"], 5);
    let b = evaluate(dir.path(), "B");
    assert_eq!(b["macro_f1"], 1.0);
    // an unverified item costs its confidence even when predicted correctly
    assert!((b["rmse"].as_f64().unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);

    // without unverified gold, full confidence on correct calls costs nothing
    gold.truncate(gold.len() - 1);
    preds.truncate(preds.len() - 1);
    write_lines(&dir.path().join("gold.jsonl"), &gold);
    write_lines(&dir.path().join("preds.jsonl"), &preds);
    assert_eq!(evaluate(dir.path(), "B")["rmse"], 0.0);
}

#[test]
fn hand_confusion_scores_two_thirds() {
    // support/comment and deny/query each form a [[2,1],[1,2]] block, so
    // every class has precision = recall = 2/3
    let dir = TempDir::new().unwrap();
    let blocks = [("support", "comment"), ("deny", "query")];
    let mut gold = Vec::new();
    let mut preds = Vec::new();
    let mut n = 0;
    for (x, y) in blocks {
        for (g, p) in [(x, x), (x, x), (x, y), (y, x), (y, y), (y, y)] {
            gold.push(serde_json::json!({"id": format!("p{n}"), "task": "A", "gold": g}));
            preds.push(serde_json::json!({"id": format!("p{n}"), "task": "A", "pred": p}));
            n += 1;
        }
    }
    write_lines(&dir.path().join("gold.jsonl"), &gold);
    write_lines(&dir.path().join("preds.jsonl"), &preds);
    let r = evaluate(dir.path(), "A");
    assert!((r["macro_f1"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r["confusion"][0], serde_json::json!([2, 1, 0, 0]));
    assert!(r.get("rmse").is_none());
}

#[test]
fn malformed_prediction_line_exits_2_with_its_number() {
    let dir = TempDir::new().unwrap();
    write_lines(&dir.path().join("gold.jsonl"), &[serde_json::json!({"id": "p0", "task": "A", "gold": "deny"})]);
    fs::write(dir.path().join("preds.jsonl"), "{\"id\":\"p0\",\"task\":\"A\",\"pred\":\"deny\"}\n\n{oops\n").unwrap();
    let out = run(
        dir.path(),
        &["evaluate", "--preds", "preds.jsonl", "--gold", "gold.jsonl", "--task", "A", "--out", "r.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn unknown_or_missing_ids_are_rejected() {
    let dir = TempDir::new().unwrap();
    let gold = [
        serde_json::json!({"id": "p0", "task": "A", "gold": "deny"}),
        serde_json::json!({"id": "p1", "task": "A", "gold": "query"}),
    ];
    write_lines(&dir.path().join("gold.jsonl"), &gold);
    let args = ["evaluate", "--preds", "preds.jsonl", "--gold", "gold.jsonl", "--task", "A", "--out", "r.json"];
    write_lines(&dir.path().join("preds.jsonl"), &[serde_json::json!({"id": "p0", "task": "A", "pred": "deny"})]);
    let out = run(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("p1"));
    write_lines(&dir.path().join("preds.jsonl"), &[serde_json::json!({"id": "zz", "task": "A", "pred": "deny"})]);
    assert_eq!(run(dir.path(), &args).status.code(), Some(2));
}

#[test]
fn pipeline_is_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        run_pipeline(d.path(), "evaluate").unwrap();
    }
    for stage in common::stages() {
        let (x, y) = (snapshot(a.path(), &stage.outputs), snapshot(b.path(), &stage.outputs));
        assert!(!x.is_empty(), "{} wrote nothing", stage.name);
        assert_eq!(x, y, "stage {} differs", stage.name);
    }
    let preds = jsonl(&a.path().join("preds.jsonl"));
    assert!(preds.iter().any(|p| p["task"] == "A") && preds.iter().any(|p| p["task"] == "B"));
}
