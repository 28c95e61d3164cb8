//! Central finite-difference gradient checking.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Result for one parameter tensor.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    /// Worst entry as (index, analytic, numeric).
    pub worst: (usize, f64, f64),
}

/// `|a − n| / max(|a|, |n|, 1e-5)`. The floor keeps entries whose true
/// gradient is zero from dividing round-off by round-off.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

/// Compares analytic gradients of `loss_fn` against central differences
/// with step `h`. `loss_fn` builds a fresh graph from the parameter values
/// and returns it with its scalar loss. At most `max_per_tensor` entries
/// of each tensor are probed, sampled with `seed`.
pub fn check_gradients<F>(
    params: &BTreeMap<String, Tensor>,
    loss_fn: F,
    h: f64,
    max_per_tensor: usize,
    seed: u64,
) -> Result<Vec<GradCheck>>
where
    F: Fn(&BTreeMap<String, Tensor>) -> Result<(Graph, Var)>,
{
    let (graph, loss) = loss_fn(params)?;
    let analytic = graph.backward(loss)?.params(&graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut out = Vec::new();
    for (name, tensor) in params {
        let grad = analytic.get(name).cloned().unwrap_or_else(|| Tensor::zeros(tensor.rows, tensor.cols));
        let idx: Vec<usize> = if tensor.len() <= max_per_tensor {
            (0..tensor.len()).collect()
        } else {
            let mut v = sample(&mut rng, tensor.len(), max_per_tensor).into_vec();
            v.sort_unstable();
            v
        };
        let mut report =
            GradCheck { name: name.clone(), entries_checked: idx.len(), max_rel_error: 0.0, worst: (0, 0.0, 0.0) };
        for i in idx {
            let orig = tensor.data[i];
            probe.get_mut(name).unwrap().data[i] = orig + h;
            let (g1, l1) = loss_fn(&probe)?;
            let plus = g1.value(l1).item();
            probe.get_mut(name).unwrap().data[i] = orig - h;
            let (g2, l2) = loss_fn(&probe)?;
            let minus = g2.value(l2).item();
            probe.get_mut(name).unwrap().data[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(grad.data[i], numeric);
            if err >= report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, grad.data[i], numeric);
            }
        }
        out.push(report);
    }
    Ok(out)
}
