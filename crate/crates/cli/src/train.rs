use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use rumorstance_core::corpus::{find_split, read_corpus};
use rumorstance_core::ensemble::{EnsemblePool, PoolMember};
use rumorstance_core::eval::Task;
use rumorstance_core::matrix_file::{
    read_matrix, write_matrix, FeatureSidecar, FeatureStore, FEATURE_MAGIC, SCORE_MAGIC,
};
use rumorstance_core::training::{
    build_pool, prepare_split, PreparedSplit, TrainData, TrainRunConfig, DEFAULT_POOL_MAX,
};
use rumorstance_core::{Dataset, EncoderKind, Split, Vocabulary};

use crate::usage;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run config: a single run, or `{"runs": [...], "pool_max": N}`.
    #[arg(long)]
    config: PathBuf,
    /// Corpus file written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    /// Feature matrix written by `features`.
    #[arg(long)]
    features: PathBuf,
    /// Vocabulary file [default: next to the corpus file].
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Output directory for logs, the checkpoint pool and `best.tad`.
    #[arg(long)]
    out: PathBuf,
    /// Seed of the first run; later runs get seed+1, seed+2, ...
    #[arg(long)]
    seed: Option<u64>,
    /// Passes over the training split.
    #[arg(long)]
    epochs: Option<usize>,
    /// Windows per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Weight of the stance loss.
    #[arg(long)]
    lambda: Option<f64>,
    /// identity, inter_sentence_transformer or bilstm.
    #[arg(long)]
    encoder: Option<EncoderKind>,
    /// Base learning rate of the conversation encoder.
    #[arg(long)]
    lr_p: Option<f64>,
    /// Base learning rate of every other component.
    #[arg(long)]
    lr_oc: Option<f64>,
    /// Warmup steps of the conversation encoder schedule.
    #[arg(long)]
    warmup_p: Option<u64>,
    /// Warmup steps of the schedule for every other component.
    #[arg(long)]
    warmup_oc: Option<u64>,
    /// Checkpoints kept in the pool.
    #[arg(long)]
    pool_max: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolConfig {
    runs: Vec<TrainRunConfig>,
    #[serde(default = "default_pool_max")]
    pool_max: usize,
}

fn default_pool_max() -> usize {
    DEFAULT_POOL_MAX
}

fn load_config(path: &Path) -> Result<PoolConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let cfg = if value.get("runs").is_some() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|run| PoolConfig { runs: vec![run], pool_max: DEFAULT_POOL_MAX })
    };
    cfg.with_context(|| format!("invalid run config {}", path.display()))
}

impl TrainArgs {
    fn apply(&self, cfg: &mut PoolConfig) {
        for (i, run) in cfg.runs.iter_mut().enumerate() {
            if let Some(s) = self.seed {
                run.seed = s + i as u64;
            }
            if let Some(v) = self.epochs {
                run.epochs = v;
            }
            if let Some(v) = self.batch_size {
                run.batch_size = v;
            }
            if let Some(v) = self.max_steps {
                run.max_steps = Some(v);
            }
            if let Some(v) = self.lambda {
                run.lambda = v;
            }
            if let Some(v) = self.encoder {
                run.encoder_kind = v;
            }
            if let Some(v) = self.lr_p {
                run.schedule_p.base_lr = v;
            }
            if let Some(v) = self.lr_oc {
                run.schedule_oc.base_lr = v;
            }
            if let Some(v) = self.warmup_p {
                run.schedule_p.warmup_steps = v;
            }
            if let Some(v) = self.warmup_oc {
                run.schedule_oc.warmup_steps = v;
            }
        }
        if let Some(v) = self.pool_max {
            cfg.pool_max = v;
        }
    }
}

/// On-disk form of an ensemble pool. Paths are relative to the pool
/// directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct PoolFile {
    pub format: String,
    pub vocab_hash: String,
    pub dev_split: String,
    pub dev_gold_stance: Vec<Option<usize>>,
    pub dev_gold_veracity: Vec<Option<usize>>,
    pub members: Vec<PoolFileMember>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PoolFileMember {
    pub name: String,
    pub checkpoint: PathBuf,
    pub dev_stance_f1: f64,
    pub dev_veracity_f1: f64,
    pub scores_stance: PathBuf,
    pub scores_veracity: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreSidecar {
    member: String,
    task: Task,
    labels: Vec<String>,
}

pub const POOL_FILE: &str = "pool.json";

impl PoolFile {
    pub fn load(dir: &Path) -> Result<(Self, EnsemblePool)> {
        let path = dir.join(POOL_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let file: PoolFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut members = Vec::with_capacity(file.members.len());
        for m in &file.members {
            let (stance, _): (_, ScoreSidecar) = read_matrix(&dir.join(&m.scores_stance), SCORE_MAGIC)?;
            let (veracity, _): (_, ScoreSidecar) = read_matrix(&dir.join(&m.scores_veracity), SCORE_MAGIC)?;
            members.push(PoolMember {
                checkpoint_ref: m.name.clone(),
                dev_stance_f1: m.dev_stance_f1,
                dev_veracity_f1: m.dev_veracity_f1,
                dev_scores_stance: stance,
                dev_scores_veracity: veracity,
            });
        }
        let pool = EnsemblePool {
            members,
            dev_gold_stance: file.dev_gold_stance.clone(),
            dev_gold_veracity: file.dev_gold_veracity.clone(),
        };
        Ok((file, pool))
    }
}

/// Corpus, vocabulary and per-thread features, loaded and cross-checked.
pub struct Inputs {
    pub datasets: Vec<Dataset>,
    pub vocab: Vocabulary,
    pub features: FeatureStore,
}

impl Inputs {
    pub fn load(data: &Path, features: &Path, vocab: Option<&PathBuf>) -> Result<Self> {
        let datasets = read_corpus(data)?;
        let vocab = Vocabulary::load(&crate::vocab_path_for(data, vocab))?;
        let (m, sidecar): (_, FeatureSidecar) = read_matrix(features, FEATURE_MAGIC)?;
        let features = FeatureStore::unflatten(&datasets, &m, &sidecar, features)?;
        Ok(Self { datasets, vocab, features })
    }

    pub fn split(&self, split: Split, max_len: usize) -> Result<Option<PreparedSplit>> {
        let Some(ds) = find_split(&self.datasets, split) else {
            return Ok(None);
        };
        let feats = self.features.split(split.name()).expect("unflatten covers every split");
        Ok(Some(prepare_split(ds, &self.vocab, feats, max_len)?))
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    a.apply(&mut cfg);
    if cfg.runs.is_empty() {
        return Err(usage("the run config lists no runs"));
    }
    for r in &cfg.runs {
        r.validate()?;
    }
    let max_len = cfg.runs[0].model.max_len;
    if cfg.runs.iter().any(|r| r.model.max_len != max_len) {
        return Err(usage("all runs must share model.max_len"));
    }
    let effective = serde_json::to_string_pretty(&cfg)?;
    info!("effective config:\n{effective}");

    let inputs = Inputs::load(&a.data, &a.features, a.vocab.as_ref())?;
    let train_split = inputs.split(Split::Train, max_len)?.ok_or_else(|| usage("the corpus has no training split"))?;
    let (dev_split, dev_name) = match inputs.split(Split::Dev, max_len)? {
        Some(d) => (d, Split::Dev.name()),
        None => {
            warn!("no dev split; selecting checkpoints on the training split");
            (train_split.clone(), Split::Train.name())
        }
    };
    let vocab_hash = inputs.vocab.hash();
    let data =
        TrainData { train: &train_split, dev: &dev_split, vocab_size: inputs.vocab.len(), vocab_hash: &vocab_hash };
    let trained = build_pool(&cfg.runs, data, cfg.pool_max)?;

    fs::create_dir_all(a.out.join("members"))?;
    fs::write(a.out.join("effective_config.json"), effective + "\n")?;
    for (r, outcome) in trained.outcomes.iter().enumerate() {
        let dir = a.out.join(format!("run{r}"));
        fs::create_dir_all(&dir)?;
        write_jsonl(&dir.join("train_log.jsonl"), &outcome.steps)?;
        write_jsonl(&dir.join("dev_log.jsonl"), &outcome.epochs)?;
    }
    let mut members = Vec::new();
    for (m, model) in trained.pool.members.iter().zip(&trained.models) {
        let rel = |suffix: &str| PathBuf::from("members").join(format!("{}{suffix}", m.checkpoint_ref));
        let entry = PoolFileMember {
            name: m.checkpoint_ref.clone(),
            checkpoint: rel(".tad"),
            dev_stance_f1: m.dev_stance_f1,
            dev_veracity_f1: m.dev_veracity_f1,
            scores_stance: rel(".stance.scr"),
            scores_veracity: rel(".veracity.scr"),
        };
        model.save(&a.out.join(&entry.checkpoint), &vocab_hash)?;
        for (task, path, scores) in [
            (Task::Stance, &entry.scores_stance, &m.dev_scores_stance),
            (Task::Veracity, &entry.scores_veracity, &m.dev_scores_veracity),
        ] {
            let side = ScoreSidecar {
                member: m.checkpoint_ref.clone(),
                task,
                labels: task.labels().iter().map(|s| s.to_string()).collect(),
            };
            write_matrix(&a.out.join(path), SCORE_MAGIC, scores, &side)?;
        }
        members.push(entry);
    }
    if let Some(best) = trained.models.first() {
        best.save(&a.out.join("best.tad"), &vocab_hash)?;
    }
    let file = PoolFile {
        format: "rumorstance-pool".into(),
        vocab_hash,
        dev_split: dev_name.into(),
        dev_gold_stance: trained.pool.dev_gold_stance.clone(),
        dev_gold_veracity: trained.pool.dev_gold_veracity.clone(),
        members,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(a.out.join(POOL_FILE), text)?;
    info!("pool of {} checkpoints written to {}", file.members.len(), a.out.display());
    Ok(())
}
