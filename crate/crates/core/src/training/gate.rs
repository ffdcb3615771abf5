use super::GateScores;
use crate::model::{argmax, ForwardOptions, ModelError, NetAb};
use crate::numeric::Rng;
use crate::text::{LabeledCorpus, LabeledExample};

/// Anything that can score an example for the gate.
pub trait GateScorer {
    fn gate_probs(&self, example: &LabeledExample) -> Result<Vec<f64>, ModelError>;
}

/// Scores a model in inference mode.
#[derive(Debug, Clone, Copy)]
pub struct ModelScorer<'a> {
    pub model: &'a NetAb,
    pub scores: GateScores,
    pub pin_identity: bool,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a NetAb, scores: GateScores) -> Self {
        Self { model, scores, pin_identity: false }
    }
}

impl GateScorer for ModelScorer<'_> {
    fn gate_probs(&self, example: &LabeledExample) -> Result<Vec<f64>, ModelError> {
        let opts = ForwardOptions::inference().with_pinned_identity(self.pin_identity);
        let out = self.model.forward(&example.ids, &mut Rng::new(0), opts)?;
        Ok(match self.scores {
            GateScores::Composed => out.noisy_probs,
            GateScores::Clean => out.clean_probs,
        })
    }
}

/// Examples whose predicted label agrees with their given label, in batch
/// order.
pub fn gate_select<'e, S: GateScorer + ?Sized>(batch: &[&'e LabeledExample], scorer: &S) -> Result<Vec<&'e LabeledExample>, ModelError> {
    let mut selected = Vec::with_capacity(batch.len());
    for &ex in batch {
        if argmax(&scorer.gate_probs(ex)?) == ex.label {
            selected.push(ex);
        }
    }
    Ok(selected)
}

/// How the gate treats genuinely clean versus corrupted examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GateBreakdown {
    pub clean_selected: usize,
    pub clean_total: usize,
    pub corrupted_selected: usize,
    pub corrupted_total: usize,
}

impl GateBreakdown {
    pub fn clean_fraction(&self) -> f64 {
        ratio(self.clean_selected, self.clean_total)
    }

    pub fn corrupted_fraction(&self) -> f64 {
        ratio(self.corrupted_selected, self.corrupted_total)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn gate_breakdown<S: GateScorer + ?Sized>(corpus: &LabeledCorpus, scorer: &S) -> Result<GateBreakdown, ModelError> {
    let mut out = GateBreakdown::default();
    for ex in &corpus.examples {
        let kept = argmax(&scorer.gate_probs(ex)?) == ex.label;
        if ex.corrupted {
            out.corrupted_total += 1;
            out.corrupted_selected += usize::from(kept);
        } else {
            out.clean_total += 1;
            out.clean_selected += usize::from(kept);
        }
    }
    Ok(out)
}
