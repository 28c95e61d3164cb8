use super::{Graph, Var};
use crate::error::{Error, Result};

/// Projection parameters of one multi-head attention block. Weights are
/// `[d, d]` in `[out, in]` layout; biases are `[1, d]`.
#[derive(Clone, Copy, Debug)]
pub struct MhaParams {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Row-major `[seq, seq]` mask: `true` where `|i − j| ≤ window/2`, or
/// where either position is in `global`.
pub fn band_mask(seq: usize, window: usize, global: &[usize]) -> Vec<bool> {
    let half = window / 2;
    let mut mask = vec![false; seq * seq];
    for i in 0..seq {
        for j in 0..seq {
            mask[i * seq + j] = i.abs_diff(j) <= half || global.contains(&i) || global.contains(&j);
        }
    }
    mask
}

/// Multi-head scaled dot-product self-attention over the rows of `x`.
/// Returns the output and the per-head attention weight matrices.
pub fn multi_head_attention(
    g: &mut Graph,
    x: Var,
    p: &MhaParams,
    heads: usize,
    mask: Option<&[bool]>,
) -> (Var, Vec<Var>) {
    let d = g.value(x).cols;
    assert!(heads > 0 && d.is_multiple_of(heads), "model width {d} is not divisible by {heads} heads");
    let dh = d / heads;
    let q = g.matmul_t(x, p.wq);
    let q = g.add_row(q, p.bq);
    let k = g.matmul_t(x, p.wk);
    let k = g.add_row(k, p.bk);
    let v = g.matmul_t(x, p.wv);
    let v = g.add_row(v, p.bv);
    let scale = 1.0 / (dh as f64).sqrt();

    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.slice_cols(q, lo, hi);
        let kh = g.slice_cols(k, lo, hi);
        let vh = g.slice_cols(v, lo, hi);
        let scores = g.matmul_t(qh, kh);
        let scores = g.scale(scores, scale);
        let w = g.masked_softmax(scores, mask);
        outs.push(g.matmul(w, vh));
        weights.push(w);
    }
    let cat = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
    let o = g.matmul_t(cat, p.wo);
    (g.add_row(o, p.bo), weights)
}

/// Local attention in which token `i` sees token `j` only when
/// `|i − j| ≤ window/2`. Positions in `global` attend to and are attended
/// by every token; pass an empty slice for purely local attention.
pub fn sliding_window_mha(
    g: &mut Graph,
    x: Var,
    p: &MhaParams,
    heads: usize,
    window: usize,
    global: &[usize],
) -> Result<(Var, Vec<Var>)> {
    if window < 2 || !window.is_multiple_of(2) {
        return Err(Error::Config(format!("attention window must be even and at least 2, got {window}")));
    }
    let seq = g.value(x).rows;
    let mask = band_mask(seq, window, global);
    Ok(multi_head_attention(g, x, p, heads, Some(&mask)))
}
