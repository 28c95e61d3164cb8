use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use rumorstance_core::corpus::{find_split, from_canonical_json};
use rumorstance_core::eval::{emit_report, PredictionRecord, Report, Task};
use rumorstance_core::Split;

use crate::usage;

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionLine {
    pub id: String,
    pub task: Task,
    pub pred: String,
    #[serde(default)]
    pub gold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions (JSON lines of {id, task, pred, gold?, confidence?}).
    #[arg(long)]
    preds: PathBuf,
    /// Gold labels: a corpus file written by `prepare`, or JSON lines of
    /// {id, task, gold}.
    #[arg(long)]
    gold: PathBuf,
    /// A (stance) or B (veracity).
    #[arg(long)]
    task: Task,
    /// Split of the corpus file holding the gold labels.
    #[arg(long, default_value = "test")]
    split: Split,
    /// Output report (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoldLine {
    id: String,
    task: Task,
    gold: Option<String>,
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| usage(format!("{}: line {}: {e}", path.display(), i + 1))))
        .collect()
}

/// Gold label name per id for one task.
fn gold_labels(path: &Path, task: Task, split: Split) -> Result<BTreeMap<String, Option<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(datasets) = from_canonical_json(&text) {
        let ds = find_split(&datasets, split)
            .ok_or_else(|| usage(format!("{} has no {} split", path.display(), split.name())))?;
        let mut out = BTreeMap::new();
        for t in &ds.threads {
            match task {
                Task::Stance => {
                    for (i, p) in t.posts.iter().enumerate() {
                        out.insert(p.id.clone(), t.stance(i).map(|s| s.name().to_string()));
                    }
                }
                Task::Veracity => {
                    out.insert(t.id().to_string(), t.veracity_label.map(|v| v.name().to_string()));
                }
            }
        }
        return Ok(out);
    }
    Ok(read_lines::<GoldLine>(path)?.into_iter().filter(|g| g.task == task).map(|g| (g.id, g.gold)).collect())
}

fn label(task: Task, name: &str, what: &str, id: &str) -> Result<usize> {
    task.label_index(name)
        .ok_or_else(|| usage(format!("{what} label '{name}' of {id} is not a task {} label", task.code())))
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let preds: Vec<PredictionLine> = read_lines(&a.preds)?;
    let gold = gold_labels(&a.gold, a.task, a.split)?;
    let mut seen = BTreeMap::new();
    let mut records = Vec::new();
    for p in preds.iter().filter(|p| p.task == a.task) {
        let g = gold.get(&p.id).ok_or_else(|| usage(format!("prediction for unknown id {}", p.id)))?;
        if seen.insert(p.id.clone(), ()).is_some() {
            return Err(usage(format!("duplicate prediction for {}", p.id)));
        }
        let Some(g) = g else { continue };
        records.push(PredictionRecord {
            id: p.id.clone(),
            gold: label(a.task, g, "gold", &p.id)?,
            pred: label(a.task, &p.pred, "predicted", &p.id)?,
            confidence: p.confidence,
        });
    }
    if let Some((id, _)) = gold.iter().find(|(id, g)| g.is_some() && !seen.contains_key(*id)) {
        return Err(usage(format!("no prediction for {id}")));
    }
    let report = Report::compute(a.task, &records)?;
    emit_report(&[report], &a.out)?;
    Ok(())
}
