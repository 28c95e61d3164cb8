use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use log::info;

use rumorstance_core::ensemble::fuse_predict;
use rumorstance_core::eval::Task;
use rumorstance_core::training::{score_split, PreparedSplit, SplitScores};
use rumorstance_core::{Model, Split, Stance, Veracity};

use crate::ensemble::EnsembleManifest;
use crate::evaluate::PredictionLine;
use crate::train::Inputs;
use crate::usage;

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// A single checkpoint.
    #[arg(long, conflicts_with = "ensemble", required_unless_present = "ensemble")]
    model: Option<PathBuf>,
    /// Ensemble manifest; give one per task to use different ensembles for
    /// stance and veracity.
    #[arg(long)]
    ensemble: Vec<PathBuf>,
    /// Corpus file written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    /// Feature matrix written by `features`.
    #[arg(long)]
    features: PathBuf,
    /// Vocabulary file [default: next to the corpus file].
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Split to predict: train, dev or test.
    #[arg(long, default_value = "test")]
    split: Split,
    /// Output predictions (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let inputs = Inputs::load(&a.data, &a.features, a.vocab.as_ref())?;
    let vocab_hash = inputs.vocab.hash();

    // checkpoint paths per task
    let mut per_task: BTreeMap<&'static str, Vec<PathBuf>> = BTreeMap::new();
    if let Some(m) = &a.model {
        per_task.insert(Task::Stance.code(), vec![m.clone()]);
        per_task.insert(Task::Veracity.code(), vec![m.clone()]);
    } else {
        let manifests =
            a.ensemble.iter().map(|p| EnsembleManifest::load(p).map(|m| (p, m))).collect::<Result<Vec<_>>>()?;
        for task in [Task::Stance, Task::Veracity] {
            let (path, m) = manifests.iter().find(|(_, m)| m.task == task).unwrap_or(&manifests[0]);
            per_task.insert(task.code(), m.checkpoints(path)?);
        }
    }

    let mut models: BTreeMap<PathBuf, Model> = BTreeMap::new();
    for path in per_task.values().flatten() {
        if !models.contains_key(path) {
            let (model, manifest) = Model::load(path)?;
            if manifest.vocab_hash != vocab_hash {
                return Err(usage(format!("{} was trained with a different vocabulary", path.display())));
            }
            models.insert(path.clone(), model);
        }
    }
    let mut splits: BTreeMap<usize, PreparedSplit> = BTreeMap::new();
    let mut scores: BTreeMap<PathBuf, SplitScores> = BTreeMap::new();
    for (path, model) in &models {
        let max_len = model.config.max_len;
        if let std::collections::btree_map::Entry::Vacant(e) = splits.entry(max_len) {
            let s = inputs
                .split(a.split, max_len)?
                .ok_or_else(|| usage(format!("the corpus has no {} split", a.split.name())))?;
            e.insert(s);
        }
        scores.insert(path.clone(), score_split(model, &splits[&max_len])?);
    }
    let split = splits.values().next().expect("at least one model");

    let mut lines = Vec::new();
    let stance_members: Vec<_> = per_task[Task::Stance.code()].iter().map(|p| &scores[p].stance).collect();
    let post_ids = split.threads.iter().flat_map(|t| &t.post_ids);
    let stance_gold = split.threads.iter().flat_map(|t| &t.stance_gold);
    for ((id, gold), (label, _)) in post_ids.zip(stance_gold).zip(fuse_predict(&stance_members)) {
        lines.push(PredictionLine {
            id: id.clone(),
            task: Task::Stance,
            pred: Stance::ALL[label].name().to_string(),
            gold: gold.map(|g| g.name().to_string()),
            confidence: None,
        });
    }
    let veracity_members: Vec<_> = per_task[Task::Veracity.code()].iter().map(|p| &scores[p].veracity).collect();
    for (t, (label, conf)) in split.threads.iter().zip(fuse_predict(&veracity_members)) {
        lines.push(PredictionLine {
            id: t.id.clone(),
            task: Task::Veracity,
            pred: Veracity::ALL[label].name().to_string(),
            gold: t.veracity_gold.map(|g| g.name().to_string()),
            confidence: Some(conf),
        });
    }
    let mut text = String::new();
    for l in &lines {
        text.push_str(&serde_json::to_string(l)?);
        text.push('\n');
    }
    fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    info!("{} predictions written", lines.len());
    Ok(())
}
