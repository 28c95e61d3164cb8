//! The joint stance/veracity network.
//!
//! A conversation window flows through
//!
//! 1. the base encoder: token and learned positional embeddings, then
//!    post-norm transformer layers with sliding-window attention; the
//!    outputs at the `[CLS]` positions give one vector `t_i` per post,
//! 2. a linear projection of each post's 441 features to `f_i`,
//! 3. the sentence encoder over `k_i = t_i ⊕ f_i`, giving `h_i`,
//! 4. a stance head on every `h_i` and a veracity head on their mean.
//!
//! Parameters whose names start with `base.` form the pretrained-style
//! group; everything else belongs to the other-components group.

mod encoders;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Stance, Veracity};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};
use crate::preprocess::TokenizedThread;
use crate::tensor::{self, Graph, MhaParams, Tensor, Var};

pub use encoders::{lstm_direction, LstmParams};

pub const LN_EPS: f64 = 1e-5;

/// Prefix of the parameters optimized as the pretrained-style group.
pub const BASE_PREFIX: &str = "base.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Identity,
    InterSentenceTransformer,
    Bilstm,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Identity => "identity",
            EncoderKind::InterSentenceTransformer => "inter_sentence_transformer",
            EncoderKind::Bilstm => "bilstm",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(EncoderKind::Identity),
            "inter_sentence_transformer" | "transformer" => Ok(EncoderKind::InterSentenceTransformer),
            "bilstm" | "lstm" => Ok(EncoderKind::Bilstm),
            other => Err(Error::Config(format!("unknown encoder kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    /// Token hidden size.
    pub d1: usize,
    pub layers: usize,
    pub heads: usize,
    /// Attention band width; token i sees j when |i − j| ≤ window/2.
    pub window: usize,
    pub max_len: usize,
    /// Feature projection size.
    pub d2: usize,
    pub encoder_kind: EncoderKind,
    /// Layers of the inter-sentence transformer.
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    /// Hidden size per direction of the BiLSTM encoder.
    pub lstm_hidden: usize,
    /// Largest number of posts in one window.
    pub max_posts: usize,
    /// Feed-forward inner size as a multiple of the layer width.
    pub ffn_mult: usize,
    pub dropout: f64,
    /// Let `[CLS]` positions attend globally. Off by default.
    #[serde(default)]
    pub global_cls_attention: bool,
    /// Stance-loss weight in `L = L_veracity + λ·L_stance`.
    pub lambda: f64,
}

impl EncoderConfig {
    /// Small dimensions for tests and fixture runs.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d1: 32,
            layers: 2,
            heads: 2,
            window: 8,
            max_len: 512,
            d2: 8,
            encoder_kind: EncoderKind::Identity,
            encoder_layers: 2,
            encoder_heads: 2,
            lstm_hidden: 16,
            max_posts: 128,
            ffn_mult: 2,
            dropout: 0.0,
            global_cls_attention: false,
            lambda: 0.7,
        }
    }

    /// Dimensions of the published configuration. Expressible, not
    /// exercised.
    pub fn full_scale(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d1: 768,
            layers: 12,
            heads: 12,
            window: 512,
            max_len: 4096,
            d2: 128,
            encoder_kind: EncoderKind::InterSentenceTransformer,
            encoder_layers: 2,
            encoder_heads: 8,
            lstm_hidden: 256,
            max_posts: 512,
            ffn_mult: 4,
            dropout: 0.1,
            global_cls_attention: false,
            lambda: 0.7,
        }
    }

    /// Width of the sentence encoder output.
    pub fn m(&self) -> usize {
        match self.encoder_kind {
            EncoderKind::Identity | EncoderKind::InterSentenceTransformer => self.d1 + self.d2,
            EncoderKind::Bilstm => 2 * self.lstm_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.vocab_size == 0 || self.d1 == 0 || self.d2 == 0 || self.max_len == 0 || self.max_posts == 0 {
            return fail("vocab_size, d1, d2, max_len and max_posts must be positive".into());
        }
        if self.heads == 0 || !self.d1.is_multiple_of(self.heads) {
            return fail(format!("d1 = {} is not divisible by heads = {}", self.d1, self.heads));
        }
        if self.window < 2 || !self.window.is_multiple_of(2) {
            return fail(format!("window must be even and at least 2, got {}", self.window));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be a finite value ≥ 0, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.ffn_mult == 0 {
            return fail("ffn_mult must be positive".into());
        }
        match self.encoder_kind {
            EncoderKind::InterSentenceTransformer => {
                if self.encoder_layers == 0 {
                    return fail("the inter-sentence transformer needs at least one layer".into());
                }
                if self.encoder_heads == 0 || !self.m().is_multiple_of(self.encoder_heads) {
                    return fail(format!(
                        "m = {} is not divisible by encoder_heads = {}",
                        self.m(),
                        self.encoder_heads
                    ));
                }
            }
            EncoderKind::Bilstm if self.lstm_hidden == 0 => return fail("lstm_hidden must be positive".into()),
            _ => {}
        }
        Ok(())
    }
}

/// Handles to the intermediate post representations of one window.
#[derive(Clone, Copy, Debug)]
pub struct PostRepresentations {
    /// `[|C|, d1]` base-encoder outputs at the `[CLS]` positions.
    pub t: Var,
    /// `[|C|, d2]` projected features.
    pub f: Var,
    /// `[|C|, d1 + d2]`.
    pub k: Var,
    /// `[|C|, m]` sentence-encoder outputs.
    pub h: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub reps: PostRepresentations,
    /// `[|C|, 4]` pre-softmax stance scores.
    pub stance_logits: Var,
    /// `[1, m]` mean-pooled representation.
    pub pooled: Var,
    /// `[1, 3]` pre-softmax veracity scores.
    pub veracity_logits: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub stance: Var,
    pub veracity: Var,
}

/// Pre-softmax scores for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowScores {
    pub stance: Tensor,
    pub veracity: Tensor,
}

/// Stacks feature vectors into a `[n, 441]` tensor.
pub fn feature_matrix(features: &[FeatureVector]) -> Tensor {
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    if rows.is_empty() {
        return Tensor::zeros(0, FEATURE_DIM);
    }
    Tensor::from_rows(&rows)
}

fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Var {
    let y = g.matmul_t(x, w);
    g.add_row(y, b)
}

/// Parameter handles of one model, registered on a graph.
struct Bound<'a> {
    params: &'a BTreeMap<String, Tensor>,
}

impl Bound<'_> {
    fn get(&self, g: &mut Graph, name: &str) -> Var {
        let t = self.params.get(name).unwrap_or_else(|| panic!("parameter '{name}' missing from the model"));
        g.param(name, t)
    }

    fn mha(&self, g: &mut Graph, prefix: &str) -> MhaParams {
        let mut p = |n: &str| self.get(g, &format!("{prefix}.{n}"));
        MhaParams {
            wq: p("wq"),
            bq: p("bq"),
            wk: p("wk"),
            bk: p("bk"),
            wv: p("wv"),
            bv: p("bv"),
            wo: p("wo"),
            bo: p("bo"),
        }
    }

    fn layer_norm(&self, g: &mut Graph, x: Var, prefix: &str) -> Var {
        let gain = self.get(g, &format!("{prefix}.g"));
        let bias = self.get(g, &format!("{prefix}.b"));
        g.layer_norm(x, gain, bias, LN_EPS)
    }

    fn ffn(&self, g: &mut Graph, x: Var, prefix: &str) -> Var {
        let w1 = self.get(g, &format!("{prefix}.w1"));
        let b1 = self.get(g, &format!("{prefix}.b1"));
        let w2 = self.get(g, &format!("{prefix}.w2"));
        let b2 = self.get(g, &format!("{prefix}.b2"));
        let hdn = linear(g, x, w1, b1);
        let hdn = g.gelu(hdn);
        linear(g, hdn, w2, b2)
    }
}

/// Parameter shapes and initialization, in registration order.
struct Init<'a> {
    rng: &'a mut ChaCha8Rng,
    params: BTreeMap<String, Tensor>,
}

impl Init<'_> {
    fn matrix(&mut self, name: String, rows: usize, cols: usize) {
        let t = Tensor::xavier(rows, cols, self.rng);
        self.params.insert(name, t);
    }

    fn zeros(&mut self, name: String, cols: usize) {
        self.params.insert(name, Tensor::zeros(1, cols));
    }

    fn ones(&mut self, name: String, cols: usize) {
        self.params.insert(name, Tensor::filled(1, cols, 1.0));
    }

    fn embedding(&mut self, name: String, rows: usize, cols: usize) {
        let t = Tensor::uniform(rows, cols, 1.0 / (cols as f64).sqrt(), self.rng);
        self.params.insert(name, t);
    }

    fn layer_norm(&mut self, prefix: &str, d: usize) {
        self.ones(format!("{prefix}.g"), d);
        self.zeros(format!("{prefix}.b"), d);
    }

    fn mha(&mut self, prefix: &str, d: usize) {
        for p in ["q", "k", "v", "o"] {
            self.matrix(format!("{prefix}.w{p}"), d, d);
            self.zeros(format!("{prefix}.b{p}"), d);
        }
    }

    fn transformer_layer(&mut self, prefix: &str, d: usize, ffn: usize) {
        self.mha(&format!("{prefix}.attn"), d);
        self.layer_norm(&format!("{prefix}.ln1"), d);
        self.matrix(format!("{prefix}.ffn.w1"), ffn, d);
        self.zeros(format!("{prefix}.ffn.b1"), ffn);
        self.matrix(format!("{prefix}.ffn.w2"), d, ffn);
        self.zeros(format!("{prefix}.ffn.b2"), d);
        self.layer_norm(&format!("{prefix}.ln2"), d);
    }
}

/// One post-norm transformer block: attention, residual and layer norm,
/// then feed-forward, residual and layer norm.
fn transformer_layer(g: &mut Graph, p: &Bound<'_>, x: Var, prefix: &str, heads: usize, mask: Option<&[bool]>) -> Var {
    let attn = p.mha(g, &format!("{prefix}.attn"));
    let (a, _) = tensor::multi_head_attention(g, x, &attn, heads, mask);
    let x = g.add(x, a);
    let x = p.layer_norm(g, x, &format!("{prefix}.ln1"));
    let f = p.ffn(g, x, &format!("{prefix}.ffn"));
    let x = g.add(x, f);
    p.layer_norm(g, x, &format!("{prefix}.ln2"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: EncoderConfig,
    pub params: BTreeMap<String, Tensor>,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init { rng: &mut rng, params: BTreeMap::new() };
        let c = &config;
        init.embedding("base.tok_emb".into(), c.vocab_size, c.d1);
        init.embedding("base.pos_emb".into(), c.max_len, c.d1);
        init.layer_norm("base.emb_ln", c.d1);
        for l in 0..c.layers {
            init.transformer_layer(&format!("base.layer{l}"), c.d1, c.ffn_mult * c.d1);
        }
        init.matrix("feat.proj.w".into(), c.d2, FEATURE_DIM);
        init.zeros("feat.proj.b".into(), c.d2);
        let k = c.d1 + c.d2;
        match c.encoder_kind {
            EncoderKind::Identity => {}
            EncoderKind::InterSentenceTransformer => {
                init.embedding("sent.pos_emb".into(), c.max_posts, k);
                for l in 0..c.encoder_layers {
                    init.transformer_layer(&format!("sent.layer{l}"), k, c.ffn_mult * k);
                }
            }
            EncoderKind::Bilstm => {
                for dir in ["fwd", "bwd"] {
                    let hdim = c.lstm_hidden;
                    init.matrix(format!("sent.{dir}.wx"), 4 * hdim, k);
                    init.matrix(format!("sent.{dir}.wh"), 4 * hdim, hdim);
                    for gate in encoders::GATES {
                        init.layer_norm(&format!("sent.{dir}.ln_x.{gate}"), hdim);
                        init.layer_norm(&format!("sent.{dir}.ln_h.{gate}"), hdim);
                    }
                    init.layer_norm(&format!("sent.{dir}.ln_c"), hdim);
                }
            }
        }
        let m = c.m();
        init.matrix("head.stance.w".into(), Stance::COUNT, m);
        init.zeros("head.stance.b".into(), Stance::COUNT);
        init.matrix("head.veracity.w".into(), Veracity::COUNT, m);
        init.zeros("head.veracity.b".into(), Veracity::COUNT);
        let params = init.params;
        Ok(Self { config, params })
    }

    pub fn is_base_param(name: &str) -> bool {
        name.starts_with(BASE_PREFIX)
    }

    pub fn n_parameters(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Builds the forward pass of one window on `g`.
    pub fn forward(
        &self,
        g: &mut Graph,
        tt: &TokenizedThread,
        features: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardOutput> {
        forward_with(&self.config, &self.params, g, tt, features, rng)
    }

    /// Pre-softmax scores of one window without recording gradients.
    pub fn scores(&self, tt: &TokenizedThread, features: &Tensor) -> Result<WindowScores> {
        let mut g = Graph::new(false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut g, tt, features, &mut rng)?;
        Ok(WindowScores { stance: g.value(out.stance_logits).clone(), veracity: g.value(out.veracity_logits).clone() })
    }

    /// Writes `<path>` (tensors) and `<path>.json` (manifest).
    pub fn save(&self, path: &Path, vocab_hash: &str) -> Result<()> {
        tensor::write_tensors(path, &self.params)?;
        let manifest = Manifest::new(self, vocab_hash);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(manifest_path(path), text)?;
        Ok(())
    }

    /// Loads a checkpoint and checks every tensor against the manifest.
    pub fn load(path: &Path) -> Result<(Self, Manifest)> {
        let mpath = manifest_path(path);
        let text = crate::error::read_text(&mpath)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
        manifest.check_labels().map_err(|msg| Error::format(&mpath, msg))?;
        let params = tensor::read_tensors(path)?;
        let expected = Model::new(manifest.config.clone(), 0)?;
        for (name, t) in &expected.params {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::format(
                        path,
                        format!("tensor {name} has shape {:?}, expected {:?}", p.shape(), t.shape()),
                    ))
                }
                None => return Err(Error::format(path, format!("missing tensor {name}"))),
            }
        }
        if params.len() != expected.params.len() {
            return Err(Error::format(path, "checkpoint holds unexpected tensors"));
        }
        Ok((Self { config: manifest.config.clone(), params }, manifest))
    }
}

/// Hex SHA-256 of a checkpoint's tensor file.
pub fn checkpoint_hash(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// JSON sidecar of a model checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: EncoderConfig,
    pub stance_labels: Vec<String>,
    pub veracity_labels: Vec<String>,
    pub feature_groups: Vec<(String, usize, usize)>,
    pub vocab_hash: String,
    pub shapes: BTreeMap<String, [usize; 2]>,
}

impl Manifest {
    fn new(model: &Model, vocab_hash: &str) -> Self {
        Self {
            format: "TAD1".into(),
            config: model.config.clone(),
            stance_labels: Stance::ALL.iter().map(|s| s.name().to_string()).collect(),
            veracity_labels: Veracity::ALL.iter().map(|v| v.name().to_string()).collect(),
            feature_groups: FeatureVector::group_offsets().into_iter().map(|(n, o, w)| (n.to_string(), o, w)).collect(),
            vocab_hash: vocab_hash.to_string(),
            shapes: model.params.iter().map(|(n, t)| (n.clone(), t.shape())).collect(),
        }
    }

    fn check_labels(&self) -> std::result::Result<(), String> {
        let stance: Vec<&str> = Stance::ALL.iter().map(|s| s.name()).collect();
        let ver: Vec<&str> = Veracity::ALL.iter().map(|v| v.name()).collect();
        if self.stance_labels != stance || self.veracity_labels != ver {
            return Err("label ordering differs from this build".into());
        }
        Ok(())
    }
}

/// The forward pass over an explicit parameter map, so that gradient
/// checks can perturb parameters freely.
pub fn forward_with(
    cfg: &EncoderConfig,
    params: &BTreeMap<String, Tensor>,
    g: &mut Graph,
    tt: &TokenizedThread,
    features: &Tensor,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardOutput> {
    let n_posts = tt.n_posts();
    let seq = tt.token_ids.len();
    if n_posts == 0 {
        return Err(Error::Invalid("window has no posts".into()));
    }
    if features.rows != n_posts || features.cols != FEATURE_DIM {
        return Err(Error::Invalid(format!(
            "feature matrix {:?} does not match {n_posts} posts x {FEATURE_DIM}",
            features.shape()
        )));
    }
    if seq > cfg.max_len {
        return Err(Error::Invalid(format!("window of {seq} tokens exceeds max_len {}", cfg.max_len)));
    }
    if n_posts > cfg.max_posts {
        return Err(Error::Invalid(format!("window of {n_posts} posts exceeds max_posts {}", cfg.max_posts)));
    }
    if let Some(&bad) = tt.token_ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Invalid(format!("token id {bad} outside a vocabulary of {}", cfg.vocab_size)));
    }
    let p = Bound { params };

    // base encoder
    let tok_table = p.get(g, "base.tok_emb");
    let pos_table = p.get(g, "base.pos_emb");
    let ids: Vec<usize> = tt.token_ids.iter().map(|&i| i as usize).collect();
    let tok = g.gather_rows(tok_table, &ids);
    let positions: Vec<usize> = (0..seq).collect();
    let pos = g.gather_rows(pos_table, &positions);
    let x = g.add(tok, pos);
    let x = p.layer_norm(g, x, "base.emb_ln");
    let mut x = g.dropout(x, cfg.dropout, rng);
    let global: &[usize] = if cfg.global_cls_attention { &tt.cls_positions } else { &[] };
    let mask = tensor::band_mask(seq, cfg.window, global);
    for l in 0..cfg.layers {
        x = transformer_layer(g, &p, x, &format!("base.layer{l}"), cfg.heads, Some(&mask));
        x = g.dropout(x, cfg.dropout, rng);
    }
    let t = g.gather_rows(x, &tt.cls_positions);

    // feature projection and concatenation
    let fin = g.input(features.clone());
    let fw = p.get(g, "feat.proj.w");
    let fb = p.get(g, "feat.proj.b");
    let f = linear(g, fin, fw, fb);
    let k = g.concat_cols(&[t, f]);

    let h = match cfg.encoder_kind {
        EncoderKind::Identity => k,
        EncoderKind::InterSentenceTransformer => {
            let table = p.get(g, "sent.pos_emb");
            let rows: Vec<usize> = (0..n_posts).collect();
            let pe = g.gather_rows(table, &rows);
            let mut h = g.add(k, pe);
            for l in 0..cfg.encoder_layers {
                h = transformer_layer(g, &p, h, &format!("sent.layer{l}"), cfg.encoder_heads, None);
            }
            h
        }
        EncoderKind::Bilstm => {
            let fwd = LstmParams::bind(g, params, "sent.fwd");
            let bwd = LstmParams::bind(g, params, "sent.bwd");
            encoders::bilstm(g, k, &fwd, &bwd)
        }
    };

    let sw = p.get(g, "head.stance.w");
    let sb = p.get(g, "head.stance.b");
    let stance_logits = linear(g, h, sw, sb);
    let pooled = g.mean_rows(h);
    let vw = p.get(g, "head.veracity.w");
    let vb = p.get(g, "head.veracity.b");
    let veracity_logits = linear(g, pooled, vw, vb);
    Ok(ForwardOutput { reps: PostRepresentations { t, f, k, h }, stance_logits, pooled, veracity_logits })
}

/// `L = L_veracity + λ·L_stance`. Stance cross-entropy is averaged over
/// posts that carry a target; a missing veracity target contributes 0.
pub fn joint_loss(
    g: &mut Graph,
    out: &ForwardOutput,
    stance_gold: &[Option<Stance>],
    veracity_gold: Option<Veracity>,
    lambda: f64,
) -> Result<LossVars> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be a finite value ≥ 0, got {lambda}")));
    }
    let st: Vec<Option<usize>> = stance_gold.iter().map(|s| s.map(Stance::index)).collect();
    let stance = g.cross_entropy(out.stance_logits, &st);
    let veracity = g.cross_entropy(out.veracity_logits, &[veracity_gold.map(Veracity::index)]);
    let weighted = g.scale(stance, lambda);
    let total = g.add(veracity, weighted);
    Ok(LossVars { total, stance, veracity })
}
