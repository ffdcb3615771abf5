//! Deterministic `f64` tensor math with reverse-mode gradients, Adam, and a
//! finite-difference gradient checker.

mod adam;
mod gradcheck;
pub mod ops;
mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use gradcheck::{grad_check, grad_check_at, relative_error};
pub use ops::{conv1d_valid, cross_entropy, dropout, max_over_time, relu, softmax, tanh_map, PROB_FLOOR};
pub use rng::Rng;
pub use tape::{Gradients, NodeId, ParamId, Tape};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    Shape { op: &'static str, expected: String, actual: String },
    #[error("conv1d_valid: input length {len} is shorter than window {width}; pad the input to at least {width} rows")]
    InputTooShort { len: usize, width: usize },
    #[error("max_over_time: empty time axis")]
    EmptyTimeAxis,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dropout rate must be in [0, 1), got {0}")]
    DropoutRate(f64),
    #[error("non-finite gradient in parameter block `{block}` at index {index}")]
    NonFiniteGradient { block: String, index: usize },
}
