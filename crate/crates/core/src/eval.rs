//! Macro-averaged F1, per-class breakdowns, veracity RMSE and reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Stance, Veracity};
use crate::error::{Error, Result};

/// Task A is stance, task B is veracity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "A")]
    Stance,
    #[serde(rename = "B")]
    Veracity,
}

impl Task {
    pub fn n_classes(self) -> usize {
        match self {
            Task::Stance => Stance::COUNT,
            Task::Veracity => Veracity::COUNT,
        }
    }

    pub fn labels(self) -> Vec<&'static str> {
        match self {
            Task::Stance => Stance::ALL.iter().map(|s| s.name()).collect(),
            Task::Veracity => Veracity::ALL.iter().map(|v| v.name()).collect(),
        }
    }

    pub fn label_index(self, name: &str) -> Option<usize> {
        self.labels().iter().position(|l| *l == name)
    }

    pub fn code(self) -> &'static str {
        match self {
            Task::Stance => "A",
            Task::Veracity => "B",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" | "stance" => Ok(Task::Stance),
            "B" | "b" | "veracity" => Ok(Task::Veracity),
            other => Err(Error::Config(format!("unknown task '{other}' (expected A/stance or B/veracity)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: usize,
    pub pred: usize,
    /// Probability of the predicted label; veracity only.
    pub confidence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn check(records: &[PredictionRecord], n_classes: usize) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Invalid("no predictions to score".into()));
    }
    if let Some(r) = records.iter().find(|r| r.gold >= n_classes || r.pred >= n_classes) {
        return Err(Error::Invalid(format!("record {} has a label outside 0..{n_classes}", r.id)));
    }
    Ok(())
}

/// `[gold][pred]` counts.
pub fn confusion_matrix(records: &[PredictionRecord], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    check(records, n_classes)?;
    let mut m = vec![vec![0; n_classes]; n_classes];
    for r in records {
        m[r.gold][r.pred] += 1;
    }
    Ok(m)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per class. A class absent from both gold and
/// predictions scores 0.
pub fn class_f1_breakdown(records: &[PredictionRecord], n_classes: usize) -> Result<Vec<ClassScores>> {
    let m = confusion_matrix(records, n_classes)?;
    Ok((0..n_classes)
        .map(|c| {
            let tp = m[c][c];
            let gold: usize = m[c].iter().sum();
            let pred: usize = m.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, pred);
            let recall = ratio(tp, gold);
            let f1 = if tp == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassScores { label: c.to_string(), precision, recall, f1, support: gold }
        })
        .collect())
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(records: &[PredictionRecord], n_classes: usize) -> Result<f64> {
    let classes = class_f1_breakdown(records, n_classes)?;
    Ok(classes.iter().map(|c| c.f1).sum::<f64>() / n_classes as f64)
}

/// Macro-F1 over aligned label slices, skipping positions without gold.
pub fn macro_f1_labels(gold: &[Option<usize>], pred: &[usize], n_classes: usize) -> Result<f64> {
    assert_eq!(gold.len(), pred.len(), "gold and prediction lengths differ");
    let records: Vec<PredictionRecord> = gold
        .iter()
        .zip(pred)
        .enumerate()
        .filter_map(|(i, (g, &p))| {
            g.map(|g| PredictionRecord { id: i.to_string(), gold: g, pred: p, confidence: None })
        })
        .collect();
    macro_f1(&records, n_classes)
}

/// Veracity RMSE. Each item's error is `1 − confidence` when the gold label
/// is true or false and the prediction is right, and `confidence` otherwise
/// (a wrong prediction, or an unverified gold label).
pub fn veracity_rmse(records: &[PredictionRecord]) -> Result<f64> {
    check(records, Veracity::COUNT)?;
    let unverified = Veracity::Unverified.index();
    let mut sum = 0.0;
    for r in records {
        let conf = r.confidence.ok_or_else(|| Error::Invalid(format!("record {} has no confidence", r.id)))?;
        if !(0.0..=1.0).contains(&conf) {
            return Err(Error::Invalid(format!("record {} has confidence {conf} outside [0, 1]", r.id)));
        }
        let e = if r.gold != unverified && r.pred == r.gold { 1.0 - conf } else { conf };
        sum += e * e;
    }
    Ok((sum / records.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: Task,
    pub n: usize,
    pub macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    pub labels: Vec<String>,
    pub classes: Vec<ClassScores>,
    /// Rows are gold labels, columns predicted labels.
    pub confusion: Vec<Vec<usize>>,
}

impl Report {
    pub fn compute(task: Task, records: &[PredictionRecord]) -> Result<Self> {
        let n = task.n_classes();
        let labels: Vec<String> = task.labels().iter().map(|s| s.to_string()).collect();
        let mut classes = class_f1_breakdown(records, n)?;
        for (c, l) in classes.iter_mut().zip(&labels) {
            c.label = l.clone();
        }
        Ok(Self {
            task,
            n: records.len(),
            macro_f1: macro_f1(records, n)?,
            rmse: match task {
                Task::Veracity => Some(veracity_rmse(records)?),
                Task::Stance => None,
            },
            labels,
            classes,
            confusion: confusion_matrix(records, n)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Writes the reports as one JSON document.
pub fn emit_report(reports: &[Report], out: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Invalid("no metrics to report".into()));
    }
    let mut s = serde_json::to_string_pretty(reports)?;
    s.push('\n');
    fs::write(out, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(gold: usize, pred: usize) -> PredictionRecord {
        PredictionRecord { id: String::new(), gold, pred, confidence: None }
    }

    fn from_confusion(m: &[&[usize]]) -> Vec<PredictionRecord> {
        let mut out = Vec::new();
        for (g, row) in m.iter().enumerate() {
            for (p, &k) in row.iter().enumerate() {
                out.extend((0..k).map(|_| rec(g, p)));
            }
        }
        out
    }

    #[test]
    fn two_by_two_confusion() {
        let records = from_confusion(&[&[2, 1], &[1, 2]]);
        let f = macro_f1(&records, 2).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn three_class_breakdown_by_hand() {
        // gold 0: 3 right, 1 as class 1; gold 1: 2 right; class 2 never seen
        let records = from_confusion(&[&[3, 1, 0], &[0, 2, 0], &[0, 0, 0]]);
        let b = class_f1_breakdown(&records, 3).unwrap();
        // class 0: p = 3/3, r = 3/4, f = 6/7; class 1: p = 2/3, r = 1, f = 4/5
        assert!((b[0].f1 - 6.0 / 7.0).abs() < 1e-15);
        assert!((b[1].f1 - 0.8).abs() < 1e-15);
        assert_eq!(b[2].f1, 0.0);
        assert_eq!(b[0].support, 4);
        let m = macro_f1(&records, 3).unwrap();
        assert_eq!(m, b.iter().map(|c| c.f1).sum::<f64>() / 3.0);
    }

    #[test]
    fn perfect_predictions() {
        let records: Vec<_> = (0..4).flat_map(|c| [rec(c, c), rec(c, c)]).collect();
        assert_eq!(macro_f1(&records, 4).unwrap(), 1.0);
        let single = vec![rec(1, 1)];
        assert_eq!(class_f1_breakdown(&single, 4).unwrap()[1].f1, 1.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(macro_f1(&[], 3).is_err());
        assert!(veracity_rmse(&[]).is_err());
        assert!(emit_report(&[], Path::new("unused.json")).is_err());
    }

    fn vrec(gold: Veracity, pred: Veracity, conf: f64) -> PredictionRecord {
        PredictionRecord { id: "x".into(), gold: gold.index(), pred: pred.index(), confidence: Some(conf) }
    }

    #[test]
    fn rmse_cases() {
        use Veracity::*;
        assert_eq!(veracity_rmse(&[vrec(True, True, 1.0), vrec(False, False, 1.0)]).unwrap(), 0.0);
        assert!((veracity_rmse(&[vrec(True, True, 0.8)]).unwrap() - 0.2).abs() < 1e-15);
        assert!((veracity_rmse(&[vrec(True, False, 0.8)]).unwrap() - 0.8).abs() < 1e-15);
        assert!((veracity_rmse(&[vrec(Unverified, Unverified, 0.6)]).unwrap() - 0.6).abs() < 1e-15);
        // sqrt((0.2² + 0.6²) / 2)
        let r = veracity_rmse(&[vrec(False, False, 0.8), vrec(Unverified, True, 0.6)]).unwrap();
        assert!((r - 0.2f64.hypot(0.6) / 2f64.sqrt()).abs() < 1e-15);
        let mut missing = vrec(True, True, 0.5);
        missing.confidence = None;
        assert!(veracity_rmse(&[missing]).is_err());
    }

    #[test]
    fn report_is_stable() {
        let mut records = from_confusion(&[&[2, 1, 0], &[0, 1, 1], &[0, 0, 3]]);
        for r in &mut records {
            r.confidence = Some(0.75);
        }
        let report = Report::compute(Task::Veracity, &records).unwrap();
        let a = report.to_json().unwrap();
        let b = Report::compute(Task::Veracity, &records).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"task\": \"B\""));
        assert_eq!(report.labels, ["true", "false", "unverified"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        emit_report(std::slice::from_ref(&report), &path).unwrap();
        let first = fs::read(&path).unwrap();
        emit_report(&[report], &path).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
    }

    proptest! {
        #[test]
        fn macro_f1_laws(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60), seed in any::<u64>()) {
            let records: Vec<_> = pairs.iter().map(|&(g, p)| rec(g, p)).collect();
            let f = macro_f1(&records, 4).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            let breakdown = class_f1_breakdown(&records, 4).unwrap();
            prop_assert_eq!(f, breakdown.iter().map(|c| c.f1).sum::<f64>() / 4.0);
            let mut shuffled = records.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(f, macro_f1(&shuffled, 4).unwrap());
        }

        #[test]
        fn rmse_in_unit_interval(items in prop::collection::vec((0usize..3, 0usize..3, 0.0f64..=1.0), 1..40)) {
            let records: Vec<_> = items
                .iter()
                .map(|&(g, p, c)| PredictionRecord { id: String::new(), gold: g, pred: p, confidence: Some(c) })
                .collect();
            let r = veracity_rmse(&records).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
