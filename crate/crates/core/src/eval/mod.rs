//! Accuracy and per-class F1, the noise-rate sweep, and result files.

mod metrics;
mod results;
mod sweep;

use std::path::PathBuf;

pub use metrics::{evaluate, ConfusionCounts, Evaluation};
pub use results::{
    emit_results, format_results, mean_accuracy, parse_json_results, round_sig6, sig6, summarize, ResultFormat, SummaryRow, SweepResult,
    RESULT_COLUMNS,
};
pub use sweep::{noise_sweep, SweepSpec, CORRUPT_STREAM, EMBED_STREAM};

use crate::model::ModelError;
use crate::text::TextError;
use crate::training::{Method, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("noise rate {0} outside [0, 0.5]; flipping half or more of the labels leaves the true class unidentifiable")]
    NoiseRate(f64),
    #[error("sweep config: {0}")]
    Config(String),
    #[error("run (noise_rate={noise_rate}, seed={seed}, method={method}) failed: {source}")]
    Cell { noise_rate: f64, seed: u64, method: Method, source: Box<EvalError> },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Text(#[from] TextError),
}

impl EvalError {
    pub fn is_numerical(&self) -> bool {
        match self {
            EvalError::Cell { source, .. } => source.is_numerical(),
            EvalError::Train(e) => e.is_numerical(),
            _ => false,
        }
    }
}
