//! Greedy Top-N_s ensembles over a pool of checkpoints, fused by averaging
//! pre-softmax scores.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{macro_f1_labels, Task};
use crate::tensor::{softmax_rows, Tensor};
use crate::training::argmax;

#[derive(Clone, Debug, PartialEq)]
pub struct PoolMember {
    pub checkpoint_ref: String,
    pub dev_stance_f1: f64,
    pub dev_veracity_f1: f64,
    /// `[n_posts, 4]` pre-softmax.
    pub dev_scores_stance: Tensor,
    /// `[n_threads, 3]` pre-softmax.
    pub dev_scores_veracity: Tensor,
}

impl PoolMember {
    pub fn scores(&self, task: Task) -> &Tensor {
        match task {
            Task::Stance => &self.dev_scores_stance,
            Task::Veracity => &self.dev_scores_veracity,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsemblePool {
    pub members: Vec<PoolMember>,
    pub dev_gold_stance: Vec<Option<usize>>,
    pub dev_gold_veracity: Vec<Option<usize>>,
}

impl EnsemblePool {
    pub fn gold(&self, task: Task) -> &[Option<usize>] {
        match task {
            Task::Stance => &self.dev_gold_stance,
            Task::Veracity => &self.dev_gold_veracity,
        }
    }

    /// Every member must score the same dev rows.
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::Invalid("ensemble pool is empty".into()));
        }
        for task in [Task::Stance, Task::Veracity] {
            let shape = [self.gold(task).len(), task.n_classes()];
            if let Some(m) = self.members.iter().find(|m| m.scores(task).shape() != shape) {
                return Err(Error::Invalid(format!(
                    "member {} has {:?} {} scores, expected {shape:?}",
                    m.checkpoint_ref,
                    m.scores(task).shape(),
                    task.code()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub candidate: usize,
    pub f1: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub task: Task,
    pub seed: u64,
    /// Pool indices in order of admission.
    pub member_indices: Vec<usize>,
    /// Dev macro-F1 after each admission; strictly increasing.
    pub accepted_f1: Vec<f64>,
    /// Every candidate considered after the seed member.
    pub trace: Vec<TraceStep>,
}

impl Ensemble {
    pub fn dev_f1(&self) -> f64 {
        *self.accepted_f1.last().expect("ensemble has at least one member")
    }
}

/// Element-wise mean of same-shaped score matrices.
pub fn mean_scores(members: &[&Tensor]) -> Tensor {
    assert!(!members.is_empty(), "cannot average zero score matrices");
    let mut out = Tensor::zeros(members[0].rows, members[0].cols);
    for m in members {
        assert_eq!(m.shape(), out.shape(), "score matrices differ in shape");
        out.data.iter_mut().zip(&m.data).for_each(|(o, v)| *o += v);
    }
    let n = members.len() as f64;
    out.data.iter_mut().for_each(|v| *v /= n);
    out
}

/// Labels from the mean pre-softmax scores, with the softmax probability of
/// each chosen label. Ties go to the lowest label index.
pub fn fuse_predict(scores_per_member: &[&Tensor]) -> Vec<(usize, f64)> {
    let mean = mean_scores(scores_per_member);
    let probs = softmax_rows(&mean, None);
    (0..mean.rows)
        .map(|r| {
            let label = argmax(mean.row(r));
            (label, probs.at(r, label))
        })
        .collect()
}

fn subset_f1(pool: &EnsemblePool, task: Task, subset: &[usize]) -> Result<f64> {
    let scores: Vec<&Tensor> = subset.iter().map(|&i| pool.members[i].scores(task)).collect();
    let pred: Vec<usize> = fuse_predict(&scores).into_iter().map(|(l, _)| l).collect();
    macro_f1_labels(pool.gold(task), &pred, task.n_classes())
}

/// Starts from the best single member (lowest index on ties), then makes one
/// pass over the other members in seeded shuffled order, admitting a
/// candidate only when it strictly raises fused dev macro-F1.
pub fn top_ns_select(pool: &EnsemblePool, task: Task, seed: u64) -> Result<Ensemble> {
    pool.validate()?;
    let mut best = 0;
    let mut best_f1 = f64::NEG_INFINITY;
    for i in 0..pool.members.len() {
        let f = subset_f1(pool, task, &[i])?;
        if f > best_f1 {
            best = i;
            best_f1 = f;
        }
    }
    let mut order: Vec<usize> = (0..pool.members.len()).filter(|&i| i != best).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut ens = Ensemble { task, seed, member_indices: vec![best], accepted_f1: vec![best_f1], trace: Vec::new() };
    for c in order {
        let mut trial = ens.member_indices.clone();
        trial.push(c);
        let f = subset_f1(pool, task, &trial)?;
        let accepted = f > ens.dev_f1();
        if accepted {
            ens.member_indices = trial;
            ens.accepted_f1.push(f);
        }
        ens.trace.push(TraceStep { candidate: c, f1: f, accepted });
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn member(name: &str, stance: Tensor, veracity: Tensor) -> PoolMember {
        PoolMember {
            checkpoint_ref: name.into(),
            dev_stance_f1: 0.0,
            dev_veracity_f1: 0.0,
            dev_scores_stance: stance,
            dev_scores_veracity: veracity,
        }
    }

    /// Gold veracity is [0, 1, 2, 0]. Member 0 gets items 0 and 1 right
    /// but calls items 2 and 3 "false" weakly; member 1 strongly corrects
    /// items 2 and 3 while being weakly wrong on 0 and 1; member 2 is wrong
    /// everywhere and drags any ensemble it joins down.
    fn trio() -> EnsemblePool {
        let st = Tensor::zeros(1, 4);
        let m0 =
            Tensor::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let m1 =
            Tensor::from_rows(&[vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 3.0], vec![3.0, 0.0, 0.0]]);
        let m2 =
            Tensor::from_rows(&[vec![0.0, 4.0, 0.0], vec![3.0, 0.0, 0.0], vec![3.0, 0.0, 0.0], vec![0.0, 3.0, 0.0]]);
        EnsemblePool {
            members: vec![member("a", st.clone(), m0), member("b", st.clone(), m1), member("c", st, m2)],
            dev_gold_stance: vec![Some(0)],
            dev_gold_veracity: vec![Some(0), Some(1), Some(2), Some(0)],
        }
    }

    /// Replays the greedy rule against a table of every subset's F1,
    /// computed independently from hand-averaged scores.
    fn brute_force_greedy(pool: &EnsemblePool, task: Task, seed: u64) -> (Vec<usize>, Vec<f64>) {
        let n = pool.members.len();
        let gold = pool.gold(task);
        let mut table = vec![0.0; 1 << n];
        for mask in 1usize..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let rows = gold.len();
            let k = task.n_classes();
            let mut pred = Vec::new();
            for r in 0..rows {
                let avg: Vec<f64> = (0..k)
                    .map(|c| idx.iter().map(|&i| pool.members[i].scores(task).at(r, c)).sum::<f64>() / idx.len() as f64)
                    .collect();
                let mut best = 0;
                for c in 1..k {
                    if avg[c] > avg[best] {
                        best = c;
                    }
                }
                pred.push(best);
            }
            // per-class F1 by counting
            let mut f1 = 0.0;
            for c in 0..k {
                let tp = (0..rows).filter(|&r| gold[r] == Some(c) && pred[r] == c).count() as f64;
                let fp = (0..rows).filter(|&r| gold[r] != Some(c) && pred[r] == c).count() as f64;
                let fnn = (0..rows).filter(|&r| gold[r] == Some(c) && pred[r] != c).count() as f64;
                if tp > 0.0 {
                    f1 += 2.0 * tp / (2.0 * tp + fp + fnn);
                }
            }
            table[mask] = f1 / k as f64;
        }
        let start = (0..n).fold(0, |b, i| if table[1 << i] > table[1 << b] { i } else { b });
        let mut order: Vec<usize> = (0..n).filter(|&i| i != start).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut mask = 1 << start;
        let mut members = vec![start];
        let mut f1s = vec![table[mask]];
        for c in order {
            let next = mask | 1 << c;
            if table[next] > table[mask] {
                mask = next;
                members.push(c);
                f1s.push(table[mask]);
            }
        }
        (members, f1s)
    }

    #[test]
    fn trio_selects_the_correcting_pair() {
        let pool = trio();
        for seed in 0..8 {
            let ens = top_ns_select(&pool, Task::Veracity, seed).unwrap();
            let mut sorted = ens.member_indices.clone();
            sorted.sort();
            assert_eq!(sorted, [0, 1], "seed {seed}");
            assert_eq!(ens.member_indices[0], 0);
            // mean of members 0 and 1 classifies all four items correctly
            assert_eq!(ens.dev_f1(), 1.0);
            let (members, f1s) = brute_force_greedy(&pool, Task::Veracity, seed);
            assert_eq!(ens.member_indices, members);
            assert_eq!(ens.accepted_f1.len(), f1s.len());
            for (a, b) in ens.accepted_f1.iter().zip(&f1s) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(ens.accepted_f1.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn fused_trio_labels_by_hand() {
        let pool = trio();
        let all: Vec<&Tensor> = pool.members.iter().map(|m| &m.dev_scores_veracity).collect();
        // row means: [1, 4/3, 1/3], [1, 1, 1/3], [1, 1/3, 1], [1, 4/3, 0]
        let fused = fuse_predict(&all);
        let labels: Vec<usize> = fused.iter().map(|f| f.0).collect();
        assert_eq!(labels, [1, 0, 0, 1]);
        let e = |x: f64| x.exp();
        let conf0 = e(4.0 / 3.0) / (e(1.0) + e(4.0 / 3.0) + e(1.0 / 3.0));
        assert!((fused[0].1 - conf0).abs() < 1e-12);
    }

    #[test]
    fn single_member_pool() {
        let mut pool = trio();
        pool.members.truncate(1);
        let ens = top_ns_select(&pool, Task::Veracity, 3).unwrap();
        assert_eq!(ens.member_indices, [0]);
        assert!(ens.trace.is_empty());
        let fused = fuse_predict(&[&pool.members[0].dev_scores_veracity]);
        assert_eq!(fused.iter().map(|f| f.0).collect::<Vec<_>>(), [0, 1, 1, 1]);
    }

    #[test]
    fn duplicate_member_is_rejected() {
        let mut pool = trio();
        pool.members.truncate(1);
        pool.members.push(pool.members[0].clone());
        let ens = top_ns_select(&pool, Task::Veracity, 0).unwrap();
        assert_eq!(ens.member_indices, [0]);
        assert_eq!(ens.trace.len(), 1);
        assert!(!ens.trace[0].accepted);
    }

    #[test]
    fn opposite_scores_tie_to_lowest_label() {
        let s = Tensor::from_rows(&[vec![1.0, -2.0, 0.5]]);
        let neg = Tensor::from_rows(&[vec![-1.0, 2.0, -0.5]]);
        let fused = fuse_predict(&[&s, &neg]);
        assert_eq!(fused[0].0, 0);
        assert!((fused[0].1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pre_softmax_mean_differs_from_probability_mean() {
        // member a: confident in class 0; member b: mildly prefers 1 over 0
        // but strongly rejects class 0 in score space.
        let a = Tensor::from_rows(&[vec![4.0, 0.0, 0.0]]);
        let b = Tensor::from_rows(&[vec![-6.0, 0.0, -1.0]]);
        let pa = softmax_rows(&a, None);
        let pb = softmax_rows(&b, None);
        let prob_mean: Vec<f64> = (0..3).map(|c| (pa.at(0, c) + pb.at(0, c)) / 2.0).collect();
        assert_eq!(argmax(&prob_mean), 0);
        // score mean [-1, 0, -0.5] favours class 1
        assert_eq!(fuse_predict(&[&a, &b])[0].0, 1);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut pool = trio();
        pool.members[1].dev_scores_veracity = Tensor::zeros(3, 3);
        assert!(top_ns_select(&pool, Task::Veracity, 0).is_err());
        pool.members.clear();
        assert!(top_ns_select(&pool, Task::Veracity, 0).is_err());
    }
}
