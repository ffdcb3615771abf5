use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::NetAb;
use crate::text::{LabeledCorpus, POSITIVE};

/// Binary confusion counts; label 1 is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Self {
        let mut c = Self::default();
        for (pred, label) in pairs {
            c.add(pred, label);
        }
        c
    }

    pub fn add(&mut self, pred: usize, label: usize) {
        match (pred == POSITIVE, label == POSITIVE) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `None` when the class is never predicted or never present, which
    /// leaves precision or recall undefined.
    pub fn f1_pos(&self) -> Option<f64> {
        f1(self.tp, self.fp, self.fn_)
    }

    pub fn f1_neg(&self) -> Option<f64> {
        f1(self.tn, self.fn_, self.fp)
    }
}

fn f1(hits: u64, false_alarms: u64, misses: u64) -> Option<f64> {
    let predicted = hits + false_alarms;
    let actual = hits + misses;
    (predicted > 0 && actual > 0).then(|| (2 * hits) as f64 / (2 * hits + false_alarms + misses) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// 0 when undefined; see `f1_pos_undefined`.
    pub f1_pos: f64,
    pub f1_neg: f64,
    pub f1_pos_undefined: bool,
    pub f1_neg_undefined: bool,
    pub counts: ConfusionCounts,
}

impl Evaluation {
    pub fn from_counts(counts: ConfusionCounts) -> Result<Self, EvalError> {
        if counts.total() == 0 {
            return Err(EvalError::EmptyTestSet);
        }
        Ok(Self {
            accuracy: counts.accuracy(),
            f1_pos: counts.f1_pos().unwrap_or(0.0),
            f1_neg: counts.f1_neg().unwrap_or(0.0),
            f1_pos_undefined: counts.f1_pos().is_none(),
            f1_neg_undefined: counts.f1_neg().is_none(),
            counts,
        })
    }

    pub fn from_predictions(predictions: &[usize], labels: &[usize]) -> Result<Self, EvalError> {
        assert_eq!(predictions.len(), labels.len(), "one prediction per label");
        Self::from_counts(ConfusionCounts::from_pairs(predictions.iter().copied().zip(labels.iter().copied())))
    }
}

/// Clean-head predictions against the corpus labels.
pub fn evaluate(model: &NetAb, test: &LabeledCorpus) -> Result<Evaluation, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut counts = ConfusionCounts::default();
    for ex in &test.examples {
        counts.add(model.predict(&ex.ids)?, ex.label);
    }
    Evaluation::from_counts(counts)
}
