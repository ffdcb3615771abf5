//! Shared CNN encoder, clean head, per-instance transition layer, and the
//! clean / noisy objectives.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{
    argmax, clean_loss, clean_loss_and_grad, clean_predict, encode, noisy_loss, noisy_loss_and_grad, noisy_predict, transition_matrix,
    ForwardOptions, ModelOutput, TransitionMatrix,
};
pub use params::{
    ANetwork, AbNetwork, CleanHead, EncoderParams, Layout, ModelConfig, NetAb, TransitionIds, TransitionParams, TRANSITION_BIAS_INIT,
    WEIGHT_INIT_RANGE,
};

use crate::numeric::NumericError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("model config: {0}")]
    Config(String),
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenId { id: usize, vocab: usize },
    #[error("noisy loss needs a non-empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint format version {found} is not supported (this build reads version {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
