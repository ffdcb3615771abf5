use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Which probabilities the gate compares with the given label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateScores {
    /// Composed noisy prediction (clean probabilities mixed through Q).
    #[default]
    Composed,
    /// Clean-head probabilities.
    Clean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cnn,
    Netab,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cnn => "cnn",
            Method::Netab => "netab",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "netab" => Ok(Method::Netab),
            "cnn" => Ok(Method::Cnn),
            other => Err(format!("unknown method `{other}` (expected netab or cnn)")),
        }
    }
}

impl FromStr for GateScores {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "composed" | "noisy" => Ok(GateScores::Composed),
            "clean" => Ok(GateScores::Clean),
            other => Err(format!("unknown gate score source `{other}` (expected composed or clean)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub dropout_rate: f64,
    pub seed: u64,
    pub fine_tune_embeddings: bool,
    pub gate_scores: GateScores,
    /// Use one Adam state for both steps instead of one per step.
    pub share_optimizer_state: bool,
    /// Rescale gradients whose global L2 norm exceeds this value.
    pub grad_clip_norm: Option<f64>,
    /// Ablation: replace the learned transition matrix with the identity.
    pub pin_identity_transition: bool,
    /// Ablation: the gate keeps every example.
    pub force_gate_open: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup_epochs: 5,
            total_epochs: 200,
            batch_size: 50,
            lr: 0.001,
            lr_decay: 0.96,
            dropout_rate: 0.5,
            seed: 1,
            fine_tune_embeddings: true,
            gate_scores: GateScores::Composed,
            share_optimizer_state: false,
            grad_clip_norm: None,
            pin_identity_transition: false,
            force_gate_open: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.warmup_epochs >= self.total_epochs {
            return bad(format!("warmup_epochs ({}) must be below total_epochs ({})", self.warmup_epochs, self.total_epochs));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("grad_clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }
}
