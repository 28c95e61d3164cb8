use crate::ensemble::{EnsemblePool, PoolMember};
use crate::error::{Error, Result};
use crate::model::Model;

use super::{train, TrainData, TrainOutcome, TrainRunConfig};

pub const DEFAULT_POOL_MAX: usize = 50;

/// A ranked pool plus the models behind each member.
#[derive(Clone, Debug)]
pub struct TrainedPool {
    pub pool: EnsemblePool,
    /// Aligned with `pool.members`.
    pub models: Vec<Model>,
    pub outcomes: Vec<TrainOutcome>,
}

/// Trains every run and keeps the `pool_max` checkpoints with the best dev
/// stance macro-F1 (earlier runs and steps first on ties).
pub fn build_pool(runs: &[TrainRunConfig], data: TrainData<'_>, pool_max: usize) -> Result<TrainedPool> {
    if runs.is_empty() {
        return Err(Error::Config("at least one training run is required".into()));
    }
    let mut entries = Vec::new();
    let mut outcomes = Vec::with_capacity(runs.len());
    for (r, run) in runs.iter().enumerate() {
        let outcome = train(run, data)?;
        for ck in &outcome.checkpoints {
            let member = PoolMember {
                checkpoint_ref: format!("run{r}-step{:06}", ck.step),
                dev_stance_f1: ck.dev_stance_f1,
                dev_veracity_f1: ck.dev_veracity_f1,
                dev_scores_stance: ck.dev_scores.stance.clone(),
                dev_scores_veracity: ck.dev_scores.veracity.clone(),
            };
            entries.push((member, ck.model.clone()));
        }
        outcomes.push(outcome);
    }
    entries.sort_by(|a, b| b.0.dev_stance_f1.total_cmp(&a.0.dev_stance_f1));
    entries.truncate(pool_max);
    let (members, models) = entries.into_iter().unzip();
    Ok(TrainedPool {
        pool: EnsemblePool {
            members,
            dev_gold_stance: data.dev.stance_gold(),
            dev_gold_veracity: data.dev.veracity_gold(),
        },
        models,
        outcomes,
    })
}
