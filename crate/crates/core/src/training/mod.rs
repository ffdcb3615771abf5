//! Warm-up and alternating training schedule, plus the plain-CNN baseline.

mod config;
mod gate;
mod history;
mod trainer;

pub use config::{GateScores, Method, TrainConfig};
pub use gate::{gate_breakdown, gate_select, GateBreakdown, GateScorer, ModelScorer};
pub use history::{EpochRecord, TrainHistory};
pub use trainer::{
    accuracy, init_model, train, train_baseline_cnn, train_with, Optimizer, StepStats, TrainOutcome, Trainer, DROPOUT_STREAM,
    INIT_STREAM, SHUFFLE_STREAM,
};

use crate::model::ModelError;
use crate::numeric::NumericError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("{which} loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { which: &'static str, epoch: usize, step: usize },
    #[error("epoch {epoch}, step {step}: {source}")]
    Step { epoch: usize, step: usize, source: Box<TrainError> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

impl TrainError {
    /// True for divergence (non-finite losses or gradients) as opposed to
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            TrainError::NonFiniteLoss { .. } => true,
            TrainError::Step { source, .. } => source.is_numerical(),
            TrainError::Numeric(NumericError::NonFiniteGradient { .. }) => true,
            TrainError::Model(ModelError::Numeric(NumericError::NonFiniteGradient { .. })) => true,
            _ => false,
        }
    }
}
