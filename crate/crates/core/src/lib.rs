//! Sentence-level polarity classification under label noise.
//!
//! A shared convolutional encoder feeds two heads: a clean softmax
//! classifier used at test time, and a per-instance noise-transition layer
//! that maps clean probabilities onto the observed (noisy) label
//! distribution. Training warms up the clean classifier, then alternates a
//! noisy-loss step over each full batch with a clean-loss step over the
//! examples whose composed prediction agrees with their given label.

pub mod eval;
pub mod model;
pub mod numeric;
pub mod synth;
pub mod text;
pub mod training;

pub use numeric::{Rng, Tensor};
