use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use log::info;
use serde::{Deserialize, Serialize};

use rumorstance_core::ensemble::top_ns_select;
use rumorstance_core::eval::Task;
use rumorstance_core::model::checkpoint_hash;

use crate::paths::{parent_dir, relative_to};
use crate::train::PoolFile;

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Pool directory written by `train`.
    #[arg(long)]
    pool: PathBuf,
    /// Task whose dev macro-F1 drives the selection: stance or veracity.
    #[arg(long)]
    task: Task,
    /// Seed of the shuffled candidate order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output manifest (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestMember {
    pub name: String,
    /// Relative to the manifest's directory.
    pub checkpoint: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceEntry {
    pub candidate: String,
    pub f1: f64,
    pub accepted: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: String,
    pub task: Task,
    pub seed: u64,
    pub vocab_hash: String,
    pub members: Vec<ManifestMember>,
    pub accepted_f1: Vec<f64>,
    pub initial: String,
    pub trace: Vec<TraceEntry>,
}

impl EnsembleManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Checkpoint paths resolved against the manifest location, after
    /// checking each file's hash.
    pub fn checkpoints(&self, manifest_path: &Path) -> Result<Vec<PathBuf>> {
        let dir = parent_dir(manifest_path);
        self.members
            .iter()
            .map(|m| {
                let p = dir.join(&m.checkpoint);
                if checkpoint_hash(&p)? != m.sha256 {
                    return Err(crate::usage(format!("checkpoint {} does not match its recorded hash", p.display())));
                }
                Ok(p)
            })
            .collect()
    }
}

pub fn ensemble(a: EnsembleArgs) -> Result<()> {
    let (file, pool) = PoolFile::load(&a.pool)?;
    let ens = top_ns_select(&pool, a.task, a.seed)?;
    let out_dir = parent_dir(&a.out);
    let members = ens
        .member_indices
        .iter()
        .map(|&i| {
            let m = &file.members[i];
            let ck = a.pool.join(&m.checkpoint);
            Ok(ManifestMember {
                name: m.name.clone(),
                checkpoint: relative_to(&out_dir, &ck)?,
                sha256: checkpoint_hash(&ck)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = EnsembleManifest {
        format: "rumorstance-ensemble".into(),
        task: a.task,
        seed: a.seed,
        vocab_hash: file.vocab_hash.clone(),
        members,
        accepted_f1: ens.accepted_f1.clone(),
        initial: file.members[ens.member_indices[0]].name.clone(),
        trace: ens
            .trace
            .iter()
            .map(|t| TraceEntry { candidate: file.members[t.candidate].name.clone(), f1: t.f1, accepted: t.accepted })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    info!("{} members, dev macro-F1 {:.4}", manifest.members.len(), ens.dev_f1());
    Ok(())
}
