use serde::{Deserialize, Serialize};

use super::NumericError;

/// Dense row-major array of `f64` with shape metadata and an optional
/// gradient slot of the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NumericError> {
        if shape.contains(&0) {
            return Err(NumericError::Shape {
                op: "tensor",
                expected: "positive dimensions".into(),
                actual: format!("{shape:?}"),
            });
        }
        let len: usize = shape.iter().product();
        if len != values.len() {
            return Err(NumericError::Shape {
                op: "tensor",
                expected: format!("{len} values for shape {shape:?}"),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(Self { shape, values, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, values: vec![0.0; len], grad: None }
    }

    /// Rank-1 tensor. `values` must be non-empty.
    pub fn vector(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        Self { shape: vec![values.len()], values, grad: None }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, NumericError> {
        Self::new(vec![rows, cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<(), NumericError> {
        if grad.len() != self.values.len() {
            return Err(NumericError::Shape {
                op: "set_grad",
                expected: format!("{} gradient entries", self.values.len()),
                actual: format!("{}", grad.len()),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn take_grad(&mut self) -> Option<Vec<f64>> {
        self.grad.take()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Row `r` of a rank-2 tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[self.shape.len() - 1];
        &self.values[r * cols..(r + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
