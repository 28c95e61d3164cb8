//! Joint training with two scheduled Adam optimizers, dev-set model
//! selection and ensemble-pool construction.

mod data;
mod pool;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::macro_f1_labels;
use crate::model::{joint_loss, EncoderConfig, EncoderKind, Model};
use crate::tensor::{Adam, AdamConfig, Graph, Tensor};

pub use data::{
    argmax, feature_matrices, prepare_split, score_split, Example, PreparedSplit, SplitScores, ThreadExamples,
};
pub use pool::{build_pool, TrainedPool, DEFAULT_POOL_MAX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// The conversation encoder (`base.*`).
    PretrainedP,
    /// Feature projection, sentence encoder and heads.
    OtherComponentsOc,
}

impl ParamGroup {
    pub fn of(name: &str) -> Self {
        if Model::is_base_param(name) {
            ParamGroup::PretrainedP
        } else {
            ParamGroup::OtherComponentsOc
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub group: ParamGroup,
}

impl ScheduleConfig {
    pub fn default_p() -> Self {
        Self { base_lr: 5e-4, warmup_steps: 200, group: ParamGroup::PretrainedP }
    }

    pub fn default_oc() -> Self {
        Self { base_lr: 1e-3, warmup_steps: 100, group: ParamGroup::OtherComponentsOc }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps < 1 {
            return Err(Error::Config("warmup_steps must be at least 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        Ok(())
    }
}

/// `base_lr · min(step^-0.5, step · warmup^-1.5)`.
pub fn lr_at(step: u64, sch: &ScheduleConfig) -> Result<f64> {
    if step == 0 {
        return Err(Error::Invalid("learning-rate schedule is undefined at step 0".into()));
    }
    sch.validate()?;
    let s = step as f64;
    let w = sch.warmup_steps as f64;
    Ok(sch.base_lr * s.powf(-0.5).min(s * w.powf(-1.5)))
}

/// Encoder sizes for a run. The vocabulary size comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub d1: usize,
    pub layers: usize,
    pub heads: usize,
    pub window: usize,
    pub max_len: usize,
    pub d2: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub lstm_hidden: usize,
    pub max_posts: usize,
    pub ffn_mult: usize,
    pub dropout: f64,
    pub global_cls_attention: bool,
}

impl Default for ModelDims {
    fn default() -> Self {
        let t = EncoderConfig::toy(1);
        Self {
            d1: t.d1,
            layers: t.layers,
            heads: t.heads,
            window: t.window,
            max_len: t.max_len,
            d2: t.d2,
            encoder_layers: t.encoder_layers,
            encoder_heads: t.encoder_heads,
            lstm_hidden: t.lstm_hidden,
            max_posts: t.max_posts,
            ffn_mult: t.ffn_mult,
            dropout: t.dropout,
            global_cls_attention: t.global_cls_attention,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch_size: usize,
    /// Stops early once this many steps have run.
    #[serde(default)]
    pub max_steps: Option<u64>,
    pub encoder_kind: EncoderKind,
    pub lambda: f64,
    pub schedule_p: ScheduleConfig,
    pub schedule_oc: ScheduleConfig,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    #[serde(default)]
    pub model: ModelDims,
}

fn default_clip() -> f64 {
    1.0
}

impl TrainRunConfig {
    pub fn new(seed: u64, encoder_kind: EncoderKind) -> Self {
        Self {
            seed,
            epochs: 10,
            batch_size: 8,
            max_steps: None,
            encoder_kind,
            lambda: 0.7,
            schedule_p: ScheduleConfig::default_p(),
            schedule_oc: ScheduleConfig::default_oc(),
            checkpoint_dir: None,
            clip_norm: default_clip(),
            model: ModelDims::default(),
        }
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        let d = &self.model;
        EncoderConfig {
            vocab_size,
            d1: d.d1,
            layers: d.layers,
            heads: d.heads,
            window: d.window,
            max_len: d.max_len,
            d2: d.d2,
            encoder_kind: self.encoder_kind,
            encoder_layers: d.encoder_layers,
            encoder_heads: d.encoder_heads,
            lstm_hidden: d.lstm_hidden,
            max_posts: d.max_posts,
            ffn_mult: d.ffn_mult,
            dropout: d.dropout,
            global_cls_attention: d.global_cls_attention,
            lambda: self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if self.schedule_p.group != ParamGroup::PretrainedP || self.schedule_oc.group != ParamGroup::OtherComponentsOc {
            return Err(Error::Config("schedule_p and schedule_oc must name their own groups".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        self.schedule_p.validate()?;
        self.schedule_oc.validate()?;
        self.encoder_config(1).validate()
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    #[serde(rename = "lr_P")]
    pub lr_p: f64,
    #[serde(rename = "lr_OC")]
    pub lr_oc: f64,
    pub loss: f64,
    pub loss_stance: f64,
    pub loss_veracity: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub stance_head_grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    pub dev_stance_f1: f64,
    pub dev_veracity_f1: f64,
    pub checkpoint: bool,
}

#[derive(Clone, Debug)]
pub struct ModelCheckpoint {
    pub epoch: usize,
    pub step: u64,
    pub dev_stance_f1: f64,
    pub dev_veracity_f1: f64,
    pub model: Model,
    /// Dev scores at the time of the checkpoint.
    pub dev_scores: SplitScores,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub checkpoints: Vec<ModelCheckpoint>,
    pub final_model: Model,
}

/// What a run trains and selects on.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub train: &'a PreparedSplit,
    pub dev: &'a PreparedSplit,
    pub vocab_size: usize,
    pub vocab_hash: &'a str,
}

/// Dev macro-F1 for (stance, veracity). A task without any gold label
/// scores 0.
pub fn dev_f1(scores: &SplitScores, split: &PreparedSplit) -> (f64, f64) {
    let st = macro_f1_labels(&split.stance_gold(), &scores.stance_predictions(), 4).unwrap_or(0.0);
    let ve = macro_f1_labels(&split.veracity_gold(), &scores.veracity_predictions(), 3).unwrap_or(0.0);
    (st, ve)
}

/// Stance accuracy over labelled posts and veracity accuracy over labelled
/// threads.
pub fn accuracy(model: &Model, split: &PreparedSplit) -> Result<(f64, f64)> {
    let scores = score_split(model, split)?;
    let acc = |gold: Vec<Option<usize>>, pred: Vec<usize>| {
        let pairs: Vec<_> = gold.iter().zip(&pred).filter_map(|(g, p)| g.map(|g| g == *p)).collect();
        if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().filter(|&&ok| ok).count() as f64 / pairs.len() as f64
        }
    };
    Ok((
        acc(split.stance_gold(), scores.stance_predictions()),
        acc(split.veracity_gold(), scores.veracity_predictions()),
    ))
}

fn norm(grads: &std::collections::BTreeMap<String, Tensor>) -> f64 {
    grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// Trains one run. Every `(epoch end | early stop)` evaluates the dev split;
/// a checkpoint is taken whenever dev stance macro-F1 strictly improves.
pub fn train(run: &TrainRunConfig, data: TrainData<'_>) -> Result<TrainOutcome> {
    run.validate()?;
    let cfg = run.encoder_config(data.vocab_size);
    let mut model = Model::new(cfg, run.seed)?;
    let examples: Vec<&Example> = data.train.threads.iter().flat_map(|t| &t.windows).collect();
    if examples.is_empty() {
        return Err(Error::Invalid("training split has no examples".into()));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(run.seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(run.seed);
    dropout_rng.set_stream(2);
    let mut adam_p = Adam::new(AdamConfig::default());
    let mut adam_oc = Adam::new(AdamConfig::default());
    if let Some(dir) = &run.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut outcome =
        TrainOutcome { steps: Vec::new(), epochs: Vec::new(), checkpoints: Vec::new(), final_model: model.clone() };
    let mut best = f64::NEG_INFINITY;
    let mut step = 0u64;
    let budget = run.max_steps.unwrap_or(u64::MAX);
    let mut order: Vec<usize> = (0..examples.len()).collect();

    'epochs: for epoch in 1..=run.epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(run.batch_size) {
            if step >= budget {
                break 'epochs;
            }
            step += 1;
            let mut grads: std::collections::BTreeMap<String, Tensor> = std::collections::BTreeMap::new();
            let (mut loss, mut loss_st, mut loss_ve) = (0.0, 0.0, 0.0);
            for &i in batch {
                let ex = examples[i];
                let mut g = Graph::new(true);
                let out = model.forward(&mut g, &ex.window, &ex.features, &mut dropout_rng)?;
                let lv = joint_loss(&mut g, &out, &ex.stance_targets, ex.veracity_target, run.lambda)?;
                loss += g.value(lv.total).item();
                loss_st += g.value(lv.stance).item();
                loss_ve += g.value(lv.veracity).item();
                for (name, gr) in g.backward(lv.total)?.params(&g) {
                    match grads.get_mut(&name) {
                        Some(acc) => acc.data.iter_mut().zip(&gr.data).for_each(|(a, b)| *a += b),
                        None => {
                            grads.insert(name, gr);
                        }
                    }
                }
            }
            let n = batch.len() as f64;
            let (loss, loss_st, loss_ve) = (loss / n, loss_st / n, loss_ve / n);
            for gr in grads.values_mut() {
                gr.data.iter_mut().for_each(|v| *v /= n);
            }
            let grad_norm = norm(&grads);
            if !loss.is_finite() || !grad_norm.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            if grad_norm > run.clip_norm {
                let s = run.clip_norm / grad_norm;
                grads.values_mut().for_each(|gr| gr.data.iter_mut().for_each(|v| *v *= s));
            }
            let lr_p = lr_at(step, &run.schedule_p)?;
            let lr_oc = lr_at(step, &run.schedule_oc)?;
            let stance_head_grad_norm = grads.get("head.stance.w").map_or(0.0, |t| t.sq_norm().sqrt());
            let (base, other): (Vec<_>, Vec<_>) = model
                .params
                .iter_mut()
                .filter_map(|(name, p)| grads.get(name).map(|gr| (name.as_str(), p, gr)))
                .partition(|(name, _, _)| ParamGroup::of(name) == ParamGroup::PretrainedP);
            adam_p.step(lr_p, base);
            adam_oc.step(lr_oc, other);
            let rec = StepRecord {
                step,
                epoch,
                lr_p,
                lr_oc,
                loss,
                loss_stance: loss_st,
                loss_veracity: loss_ve,
                grad_norm,
                stance_head_grad_norm,
            };
            log::debug!("step {step} loss {loss:.6}");
            outcome.steps.push(rec);
        }
        evaluate_epoch(run, &data, &model, epoch, step, &mut best, &mut outcome)?;
    }
    if outcome.epochs.last().map(|e| e.step) != Some(step) {
        let epoch = outcome.steps.last().map_or(0, |s| s.epoch);
        evaluate_epoch(run, &data, &model, epoch, step, &mut best, &mut outcome)?;
    }
    outcome.final_model = model;
    Ok(outcome)
}

fn evaluate_epoch(
    run: &TrainRunConfig,
    data: &TrainData<'_>,
    model: &Model,
    epoch: usize,
    step: u64,
    best: &mut f64,
    outcome: &mut TrainOutcome,
) -> Result<()> {
    let scores = score_split(model, data.dev)?;
    let (st, ve) = dev_f1(&scores, data.dev);
    let improved = st > *best;
    log::info!("epoch {epoch} step {step}: dev stance F1 {st:.4}, veracity F1 {ve:.4}");
    if improved {
        *best = st;
        let path = match &run.checkpoint_dir {
            Some(dir) => {
                let p = dir.join(format!("ckpt-step{step:06}.tad"));
                model.save(&p, data.vocab_hash)?;
                Some(p)
            }
            None => None,
        };
        outcome.checkpoints.push(ModelCheckpoint {
            epoch,
            step,
            dev_stance_f1: st,
            dev_veracity_f1: ve,
            model: model.clone(),
            dev_scores: scores,
            path,
        });
    }
    outcome.epochs.push(EpochRecord { epoch, step, dev_stance_f1: st, dev_veracity_f1: ve, checkpoint: improved });
    Ok(())
}
