//! Drives the `rumorstance` binary from integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use walkdir::WalkDir;

pub const BIN: &str = env!("CARGO_BIN_EXE_rumorstance");
pub const FIXTURE_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/fixture.json");

/// Runs the binary inside `dir` so that every path it writes is relative.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env("RUST_LOG", "warn").output().expect("the binary starts")
}

pub fn try_run(dir: &Path, args: &[&str]) -> Result<Output, String> {
    let out = run(dir, args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`rumorstance {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    try_run(dir, args).unwrap_or_else(|e| panic!("{e}"))
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// One pipeline stage: its command line and the paths it writes.
pub struct Stage {
    pub name: &'static str,
    pub args: Vec<&'static str>,
    pub outputs: Vec<&'static str>,
}

/// The seeded fixture pipeline from corpus to evaluation report.
pub fn stages() -> Vec<Stage> {
    let stage = |name, args: &[&'static str], outputs: &[&'static str]| Stage {
        name,
        args: args.to_vec(),
        outputs: outputs.to_vec(),
    };
    vec![
        stage(
            "prepare",
            &["prepare", "--fixture", "6", "--seed", "7", "--out", "corpus.json"],
            &["corpus.json", "corpus.vocab", "corpus.report.json"],
        ),
        stage("fixture-resources", &["fixture-resources", "--data", "corpus.json", "--out", "res"], &["res"]),
        stage(
            "features",
            &[
                "features",
                "--data",
                "corpus.json",
                "--lexicons",
                "res/lexicons",
                "--embeddings",
                "res/embeddings.txt",
                "--out",
                "feat.fv",
            ],
            &["feat.fv", "feat.fv.json"],
        ),
        stage(
            "train",
            &[
                "train",
                "--config",
                FIXTURE_CONFIG,
                "--data",
                "corpus.json",
                "--features",
                "feat.fv",
                "--epochs",
                "4",
                "--out",
                "pool",
            ],
            &["pool"],
        ),
        stage(
            "ensemble",
            &["ensemble", "--pool", "pool", "--task", "stance", "--seed", "5", "--out", "ens.json"],
            &["ens.json"],
        ),
        stage(
            "predict",
            &[
                "predict",
                "--ensemble",
                "ens.json",
                "--data",
                "corpus.json",
                "--features",
                "feat.fv",
                "--out",
                "preds.jsonl",
            ],
            &["preds.jsonl"],
        ),
        stage(
            "evaluate",
            &["evaluate", "--preds", "preds.jsonl", "--gold", "corpus.json", "--task", "A", "--out", "report.json"],
            &["report.json"],
        ),
    ]
}

/// Runs the stages in order, stopping after `last`.
pub fn run_pipeline(dir: &Path, last: &str) -> Result<(), String> {
    for s in stages() {
        try_run(dir, &s.args)?;
        if s.name == last {
            return Ok(());
        }
    }
    Err(format!("no stage named {last}"))
}

/// Every file under `outputs`, relative to `dir`, with its bytes.
pub fn snapshot(dir: &Path, outputs: &[&str]) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    for out in outputs {
        for entry in WalkDir::new(dir.join(out)).sort_by_file_name() {
            let entry = entry.expect("readable output");
            if entry.file_type().is_file() {
                let rel = entry.path().strip_prefix(dir).unwrap().to_path_buf();
                files.push((rel, fs::read(entry.path()).unwrap()));
            }
        }
    }
    files
}
