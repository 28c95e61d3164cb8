//! The layer-normalized bidirectional LSTM sentence encoder.

use std::collections::BTreeMap;

use super::LN_EPS;
use crate::tensor::{Graph, Tensor, Var};

/// Gate order inside the stacked `[4H, ·]` weight matrices.
pub(super) const GATES: [&str; 4] = ["f", "i", "o", "g"];

/// Parameters of one LSTM direction with per-gate layer normalization.
/// The layer-norm biases double as the gate biases.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub hidden: usize,
    /// `[4H, in]`
    pub wx: Var,
    /// `[4H, H]`
    pub wh: Var,
    /// (gain, bias) per gate on the input path.
    pub ln_x: [(Var, Var); 4],
    /// (gain, bias) per gate on the recurrent path.
    pub ln_h: [(Var, Var); 4],
    pub ln_c: (Var, Var),
}

impl LstmParams {
    pub fn bind(g: &mut Graph, params: &BTreeMap<String, Tensor>, prefix: &str) -> Self {
        let mut get = |name: String| {
            let t = params.get(&name).unwrap_or_else(|| panic!("parameter '{name}' missing from the model"));
            g.param(&name, t)
        };
        let wx = get(format!("{prefix}.wx"));
        let wh = get(format!("{prefix}.wh"));
        let mut ln = |path: &str| {
            GATES.map(|gate| (get(format!("{prefix}.{path}.{gate}.g")), get(format!("{prefix}.{path}.{gate}.b"))))
        };
        let ln_x = ln("ln_x");
        let ln_h = ln("ln_h");
        let ln_c = (get(format!("{prefix}.ln_c.g")), get(format!("{prefix}.ln_c.b")));
        let hidden = params[&format!("{prefix}.wh")].cols;
        Self { hidden, wx, wh, ln_x, ln_h, ln_c }
    }
}

/// Per-gate layer norm of a `[1, 4H]` pre-activation row.
fn gate_norm(g: &mut Graph, z: Var, ln: &[(Var, Var); 4], hidden: usize) -> [Var; 4] {
    std::array::from_fn(|j| {
        let s = g.slice_cols(z, j * hidden, (j + 1) * hidden);
        g.layer_norm(s, ln[j].0, ln[j].1, LN_EPS)
    })
}

/// Runs one direction over the rows of `x` in the given order and returns
/// the output rows in that same order.
///
/// `gates = LN_h(W_h r_{i−1}) + LN_x(W_x k_i)`,
/// `C_i = σ(F)⊙C_{i−1} + σ(I)⊙tanh(G)`,
/// `r_i = σ(O)⊙tanh(LN_c(C_i))`.
pub fn lstm_direction(g: &mut Graph, x: Var, p: &LstmParams, order: &[usize]) -> Vec<Var> {
    let hdim = p.hidden;
    let xz = g.matmul_t(x, p.wx);
    let mut r = g.input(Tensor::zeros(1, hdim));
    let mut c = g.input(Tensor::zeros(1, hdim));
    let mut outs = Vec::with_capacity(order.len());
    for &i in order {
        let zx = g.slice_rows(xz, i, i + 1);
        let zx = gate_norm(g, zx, &p.ln_x, hdim);
        let zh = g.matmul_t(r, p.wh);
        let zh = gate_norm(g, zh, &p.ln_h, hdim);
        let [f, inp, o, cand] = std::array::from_fn(|j| g.add(zx[j], zh[j]));
        let f = g.sigmoid(f);
        let inp = g.sigmoid(inp);
        let o = g.sigmoid(o);
        let cand = g.tanh(cand);
        let keep = g.mul(f, c);
        let write = g.mul(inp, cand);
        c = g.add(keep, write);
        let cn = g.layer_norm(c, p.ln_c.0, p.ln_c.1, LN_EPS);
        let cn = g.tanh(cn);
        r = g.mul(o, cn);
        outs.push(r);
    }
    outs
}

/// `h_i = forward r_i ⊕ backward r_i`, `[n, 2H]`.
pub(super) fn bilstm(g: &mut Graph, x: Var, fwd: &LstmParams, bwd: &LstmParams) -> Var {
    let n = g.value(x).rows;
    let order: Vec<usize> = (0..n).collect();
    let rev: Vec<usize> = (0..n).rev().collect();
    let f = lstm_direction(g, x, fwd, &order);
    let mut b = lstm_direction(g, x, bwd, &rev);
    b.reverse();
    let rows: Vec<Var> = f.into_iter().zip(b).map(|(fr, br)| g.concat_cols(&[fr, br])).collect();
    g.concat_rows(&rows)
}
