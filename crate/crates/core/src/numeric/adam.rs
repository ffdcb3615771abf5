use serde::{Deserialize, Serialize};

use super::{NumericError, Tensor};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_hyper(len, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON)
    }

    pub fn with_hyper(len: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { first_moment: vec![0.0; len], second_moment: vec![0.0; len], step: 0, beta1, beta2, epsilon }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// `block` names the parameter in errors. A non-finite gradient leaves both
/// `params` and `state` untouched.
pub fn adam_step(params: &mut Tensor, grads: &[f64], state: &mut AdamState, lr: f64, block: &str) -> Result<(), NumericError> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() || state.second_moment.len() != params.len() {
        return Err(NumericError::Shape {
            op: "adam_step",
            expected: format!("{} gradient and moment entries for {block}", params.len()),
            actual: format!("{} gradients, {} moments", grads.len(), state.first_moment.len()),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NumericError::NonFiniteGradient { block: block.to_string(), index: i });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
