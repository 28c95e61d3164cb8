use crate::corpus::{Dataset, Stance, Veracity};
use crate::error::{Error, Result};
use crate::features::{extract_thread, EmbeddingTable, LexiconSet};
use crate::model::{feature_matrix, Model};
use crate::preprocess::{assemble, window_split, TokenizedThread, Vocabulary};
use crate::tensor::Tensor;

/// One conversation window with its feature rows and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub window: TokenizedThread,
    /// `[|C|, 441]`
    pub features: Tensor,
    /// A post's stance target appears only in the first window holding it.
    pub stance_targets: Vec<Option<Stance>>,
    pub veracity_target: Option<Veracity>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThreadExamples {
    pub id: String,
    pub post_ids: Vec<String>,
    pub windows: Vec<Example>,
    pub stance_gold: Vec<Option<Stance>>,
    pub veracity_gold: Option<Veracity>,
}

/// Windows of every thread of one split, in dataset order.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSplit {
    pub threads: Vec<ThreadExamples>,
}

impl PreparedSplit {
    pub fn n_posts(&self) -> usize {
        self.threads.iter().map(|t| t.post_ids.len()).sum()
    }

    pub fn stance_gold(&self) -> Vec<Option<usize>> {
        self.threads.iter().flat_map(|t| t.stance_gold.iter().map(|s| s.map(Stance::index))).collect()
    }

    pub fn veracity_gold(&self) -> Vec<Option<usize>> {
        self.threads.iter().map(|t| t.veracity_gold.map(Veracity::index)).collect()
    }
}

/// One `[n_posts, 441]` feature tensor per thread.
pub fn feature_matrices(dataset: &Dataset, lex: &LexiconSet, emb: &EmbeddingTable) -> Vec<Tensor> {
    dataset.threads.iter().map(|t| feature_matrix(&extract_thread(t, lex, emb))).collect()
}

/// Tokenizes and windows a split. `features` holds one `[n_posts, 441]`
/// tensor per thread.
pub fn prepare_split(
    dataset: &Dataset,
    vocab: &Vocabulary,
    features: &[Tensor],
    max_len: usize,
) -> Result<PreparedSplit> {
    if features.len() != dataset.threads.len() {
        return Err(Error::Invalid(format!("{} feature blocks for {} threads", features.len(), dataset.threads.len())));
    }
    let mut threads = Vec::with_capacity(dataset.threads.len());
    for (thread, feats) in dataset.threads.iter().zip(features) {
        if feats.rows != thread.len() {
            return Err(Error::Invalid(format!(
                "thread {}: {} feature rows for {} posts",
                thread.id(),
                feats.rows,
                thread.len()
            )));
        }
        let gold: Vec<Option<Stance>> = (0..thread.len()).map(|i| thread.stance(i)).collect();
        let mut seen = vec![false; thread.len()];
        let windows = window_split(&assemble(thread, vocab), max_len)?
            .into_iter()
            .map(|w| {
                let range = w.post_range();
                let rows: Vec<Vec<f64>> = range.clone().map(|i| feats.row(i).to_vec()).collect();
                let stance_targets = range
                    .map(|i| {
                        let first = !seen[i];
                        seen[i] = true;
                        if first {
                            gold[i]
                        } else {
                            None
                        }
                    })
                    .collect();
                Example {
                    window: w,
                    features: Tensor::from_rows(&rows),
                    stance_targets,
                    veracity_target: thread.veracity_label,
                }
            })
            .collect();
        threads.push(ThreadExamples {
            id: thread.id().to_string(),
            post_ids: thread.posts.iter().map(|p| p.id.clone()).collect(),
            windows,
            stance_gold: gold,
            veracity_gold: thread.veracity_label,
        });
    }
    Ok(PreparedSplit { threads })
}

/// Pre-softmax scores for a whole split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitScores {
    /// `[n_posts, 4]`, posts in dataset order.
    pub stance: Tensor,
    /// `[n_threads, 3]`
    pub veracity: Tensor,
}

/// Lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl SplitScores {
    pub fn stance_predictions(&self) -> Vec<usize> {
        (0..self.stance.rows).map(|r| argmax(self.stance.row(r))).collect()
    }

    pub fn veracity_predictions(&self) -> Vec<usize> {
        (0..self.veracity.rows).map(|r| argmax(self.veracity.row(r))).collect()
    }
}

/// Scores every post from the first window that holds it, and every thread
/// from its first window.
pub fn score_split(model: &Model, split: &PreparedSplit) -> Result<SplitScores> {
    let mut stance = Vec::with_capacity(split.n_posts() * 4);
    let mut veracity = Vec::with_capacity(split.threads.len() * 3);
    for t in &split.threads {
        let n = t.post_ids.len();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
        for (wi, ex) in t.windows.iter().enumerate() {
            let s = model.scores(&ex.window, &ex.features)?;
            if wi == 0 {
                veracity.extend_from_slice(&s.veracity.data);
            }
            for (local, i) in ex.window.post_range().enumerate() {
                if rows[i].is_none() {
                    rows[i] = Some(s.stance.row(local).to_vec());
                }
            }
        }
        for (i, r) in rows.into_iter().enumerate() {
            let r = r.ok_or_else(|| Error::Invalid(format!("thread {}: post {i} is in no window", t.id)))?;
            stance.extend(r);
        }
    }
    Ok(SplitScores {
        stance: Tensor::from_vec(stance.len() / 4, 4, stance),
        veracity: Tensor::from_vec(veracity.len() / 3, 3, veracity),
    })
}
