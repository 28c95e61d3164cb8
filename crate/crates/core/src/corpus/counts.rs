use std::collections::BTreeMap;

use serde::Serialize;

use super::{Dataset, Stance, Veracity};

/// Expected label counts keyed by `stance.<label>`, `veracity.<label>`,
/// `stance.total` and `veracity.total`.
pub type ExpectedCounts = BTreeMap<String, usize>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountMismatch {
    pub key: String,
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CountReport {
    pub counts: BTreeMap<String, usize>,
    pub matches: usize,
    pub mismatches: Vec<CountMismatch>,
}

impl CountReport {
    pub fn all_match(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn label_counts<'a>(datasets: impl IntoIterator<Item = &'a Dataset>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in Stance::ALL {
        counts.insert(format!("stance.{s}"), 0);
    }
    for v in Veracity::ALL {
        counts.insert(format!("veracity.{v}"), 0);
    }
    counts.insert("stance.total".into(), 0);
    counts.insert("veracity.total".into(), 0);
    for ds in datasets {
        for thread in &ds.threads {
            for s in thread.stance_labels.iter().flatten().flatten() {
                *counts.get_mut(&format!("stance.{s}")).unwrap() += 1;
                *counts.get_mut("stance.total").unwrap() += 1;
            }
            if let Some(v) = thread.veracity_label {
                *counts.get_mut(&format!("veracity.{v}")).unwrap() += 1;
                *counts.get_mut("veracity.total").unwrap() += 1;
            }
        }
    }
    counts
}

/// Compares label counts of one or more datasets against an expected table.
/// Keys absent from `expected` are reported but not compared.
pub fn validate_counts<'a>(datasets: impl IntoIterator<Item = &'a Dataset>, expected: &ExpectedCounts) -> CountReport {
    let counts = label_counts(datasets);
    let mut matches = 0;
    let mut mismatches = Vec::new();
    for (key, &want) in expected {
        let actual = counts.get(key).copied().unwrap_or(0);
        if actual == want {
            matches += 1;
        } else {
            mismatches.push(CountMismatch { key: key.clone(), expected: want, actual });
        }
    }
    CountReport { counts, matches, mismatches }
}

/// Published RumorEval 2019 corpus statistics. "train" covers the released
/// training and development keys together.
pub mod published_counts {
    use super::ExpectedCounts;

    fn table(pairs: &[(&str, usize)]) -> ExpectedCounts {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    pub fn task_a_train() -> ExpectedCounts {
        table(&[
            ("stance.support", 1027),
            ("stance.deny", 460),
            ("stance.query", 515),
            ("stance.comment", 4700),
            ("stance.total", 6702),
        ])
    }

    pub fn task_a_test() -> ExpectedCounts {
        table(&[
            ("stance.support", 157),
            ("stance.deny", 146),
            ("stance.query", 93),
            ("stance.comment", 1476),
            ("stance.total", 1872),
        ])
    }

    pub fn task_b_train() -> ExpectedCounts {
        table(&[("veracity.true", 154), ("veracity.false", 98), ("veracity.unverified", 113), ("veracity.total", 365)])
    }

    pub fn task_b_test() -> ExpectedCounts {
        table(&[("veracity.true", 31), ("veracity.false", 40), ("veracity.unverified", 10), ("veracity.total", 81)])
    }
}
