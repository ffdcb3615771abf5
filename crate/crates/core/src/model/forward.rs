//! Forward passes and the two training objectives.
//!
//! Training goes through a [`Tape`]; the direct functions ([`encode`],
//! [`clean_predict`], [`transition_matrix`], [`noisy_predict`]) evaluate the
//! same math without recording, for inference and gating.

use serde::{Deserialize, Serialize};

use super::params::{CleanHead, EncoderParams, NetAb, TransitionParams};
use super::ModelError;
use crate::numeric::{ops, Gradients, NodeId, Rng, Tape, Tensor};
use crate::text::LabeledExample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub training: bool,
    pub dropout_rate: f64,
    /// Replace the learned transition matrix by a constant identity.
    pub pin_identity: bool,
}

impl ForwardOptions {
    pub fn inference() -> Self {
        Self { training: false, dropout_rate: 0.0, pin_identity: false }
    }

    pub fn training(dropout_rate: f64) -> Self {
        Self { training: true, dropout_rate, pin_identity: false }
    }

    pub fn with_pinned_identity(mut self, pin: bool) -> Self {
        self.pin_identity = pin;
        self
    }
}

/// Row-stochastic `c×c` matrix; row `i` is the distribution of the observed
/// label given clean label `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    classes: usize,
    values: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let classes = rows.len();
        assert!(rows.iter().all(|r| r.len() == classes), "transition matrix must be square");
        Self { classes, values: rows.into_iter().flatten().collect() }
    }

    pub fn identity(classes: usize) -> Self {
        Self::from_rows((0..classes).map(|i| (0..classes).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.classes..(i + 1) * self.classes]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.classes + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.classes, self.classes, self.values.clone()).expect("square")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub clean_probs: Vec<f64>,
    pub noisy_probs: Vec<f64>,
    pub transition: TransitionMatrix,
    pub encoding: Vec<f64>,
}

/// Sentence encoding: embedding lookup, input dropout, then for each window
/// a valid convolution, ReLU and max-over-time pooling, concatenated.
pub fn encode(ids: &[usize], enc: &EncoderParams<'_>, rng: &mut Rng, opts: ForwardOptions) -> Result<Vec<f64>, ModelError> {
    let table = enc.embeddings;
    let (rows, dim) = (table.shape()[0], table.shape()[1]);
    if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
        return Err(ModelError::TokenId { id: bad, vocab: rows });
    }
    let mut v: Vec<f64> = ids.iter().flat_map(|&i| table.row(i).iter().copied()).collect();
    if let Some(mask) = ops::dropout_mask(v.len(), opts.dropout_rate, rng, opts.training)? {
        v.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
    }
    let input = Tensor::new(vec![ids.len(), dim], v)?;
    let mut h = Vec::new();
    for (k, b) in enc.kernels.iter().zip(&enc.biases) {
        let conv = ops::relu(&ops::conv1d_valid(&input, k, b)?);
        let (pooled, _) = ops::max_over_time(&conv)?;
        h.extend_from_slice(pooled.values());
    }
    Ok(h)
}

fn affine(weight: &Tensor, bias: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = weight.shape()[1];
    bias.values().iter().enumerate().map(|(r, b)| b + weight.values()[r * cols..(r + 1) * cols].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).collect()
}

/// `softmax(W h + b)`
pub fn clean_predict(h: &[f64], head: &CleanHead<'_>) -> Vec<f64> {
    ops::softmax_slice(&affine(head.weight, head.bias, h))
}

/// Row `i` is `softmax(tanh(W_i u + b_i) ⊙ f_i)`.
pub fn transition_matrix(u: &[f64], tp: &TransitionParams<'_>) -> TransitionMatrix {
    let rows = tp
        .rows
        .iter()
        .map(|(w, b, f)| {
            let g: Vec<f64> = affine(w, b, u).into_iter().map(f64::tanh).collect();
            let z: Vec<f64> = g.iter().zip(f.values()).map(|(a, s)| a * s).collect();
            ops::softmax_slice(&z)
        })
        .collect();
    TransitionMatrix::from_rows(rows)
}

/// `noisy[j] = Σ_i Q[i][j] · clean[i]`
pub fn noisy_predict(clean_probs: &[f64], q: &TransitionMatrix) -> Vec<f64> {
    let c = q.classes();
    let mut out = vec![0.0; c];
    for (i, &p) in clean_probs.iter().enumerate() {
        for (o, &qv) in out.iter_mut().zip(q.row(i)) {
            *o += p * qv;
        }
    }
    out
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Nodes of one example's forward pass.
pub(crate) struct Graph {
    pub clean: NodeId,
    pub noisy: Option<NodeId>,
}

impl NetAb {
    /// Full forward pass without recording gradients.
    pub fn forward(&self, ids: &[usize], rng: &mut Rng, opts: ForwardOptions) -> Result<ModelOutput, ModelError> {
        let h = encode(ids, &self.encoder(), rng, opts)?;
        let clean = clean_predict(&h, &self.head());
        let q = if opts.pin_identity { TransitionMatrix::identity(self.config().classes) } else { transition_matrix(&h, &self.transition()) };
        let noisy = noisy_predict(&clean, &q);
        Ok(ModelOutput { clean_probs: clean, noisy_probs: noisy, transition: q, encoding: h })
    }

    /// Clean-head probabilities in inference mode.
    pub fn clean_probs(&self, ids: &[usize]) -> Result<Vec<f64>, ModelError> {
        let h = encode(ids, &self.encoder(), &mut Rng::new(0), ForwardOptions::inference())?;
        Ok(clean_predict(&h, &self.head()))
    }

    /// Test-time label: argmax of the clean head.
    pub fn predict(&self, ids: &[usize]) -> Result<usize, ModelError> {
        Ok(argmax(&self.clean_probs(ids)?))
    }

    pub(crate) fn record(&self, tape: &mut Tape<'_>, ids: &[usize], rng: &mut Rng, opts: ForwardOptions, with_noisy: bool) -> Result<Graph, ModelError> {
        let l = self.layout();
        let rows = self.vocab_size();
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(ModelError::TokenId { id: bad, vocab: rows });
        }
        let table = tape.param(l.embeddings);
        let v = tape.embedding(table, ids)?;
        let v = tape.dropout(v, opts.dropout_rate, rng, opts.training)?;
        let mut pooled = Vec::with_capacity(3);
        for (&k, &b) in l.kernels.iter().zip(&l.conv_bias) {
            let (k, b) = (tape.param(k), tape.param(b));
            let conv = tape.conv1d(v, k, b)?;
            let act = tape.relu(conv);
            pooled.push(tape.max_over_time(act)?);
        }
        let h = tape.concat(&pooled);
        let (w, b) = (tape.param(l.head_weight), tape.param(l.head_bias));
        let logits = tape.affine(w, b, h)?;
        let clean = tape.softmax(logits);
        if !with_noisy {
            return Ok(Graph { clean, noisy: None });
        }
        let q = if opts.pin_identity {
            tape.constant(TransitionMatrix::identity(self.config().classes).to_tensor())
        } else {
            let mut rows = Vec::with_capacity(l.transition.len());
            for t in &l.transition {
                let (w, b, f) = (tape.param(t.weight), tape.param(t.bias), tape.param(t.scale));
                let z = tape.affine(w, b, h)?;
                let g = tape.tanh(z);
                let gf = tape.mul(g, f)?;
                rows.push(tape.softmax(gf));
            }
            tape.stack(&rows)?
        };
        let noisy = tape.mix(clean, q)?;
        Ok(Graph { clean, noisy: Some(noisy) })
    }

    fn batch_loss(&self, batch: &[&LabeledExample], rng: &mut Rng, opts: ForwardOptions, noisy: bool, grad: bool) -> Result<(f64, Option<Gradients>), ModelError> {
        let mut tape = Tape::new(self.params());
        let mut losses = Vec::with_capacity(batch.len());
        for ex in batch {
            let g = self.record(&mut tape, &ex.ids, rng, opts, noisy)?;
            let probs = if noisy { g.noisy.expect("recorded") } else { g.clean };
            losses.push(tape.cross_entropy(probs, ex.label)?);
        }
        let loss = tape.mean(&losses);
        let value = tape.scalar(loss);
        let grads = grad.then(|| tape.backward(loss));
        Ok((value, grads))
    }
}

/// Mean cross-entropy of the clean head over `batch`; `None` for an empty
/// batch (the clean step is skipped).
pub fn clean_loss(model: &NetAb, batch: &[&LabeledExample], rng: &mut Rng, opts: ForwardOptions) -> Result<Option<f64>, ModelError> {
    if batch.is_empty() {
        return Ok(None);
    }
    Ok(Some(model.batch_loss(batch, rng, opts, false, false)?.0))
}

/// Mean cross-entropy of the composed noisy prediction over `batch`.
pub fn noisy_loss(model: &NetAb, batch: &[&LabeledExample], rng: &mut Rng, opts: ForwardOptions) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    Ok(model.batch_loss(batch, rng, opts, true, false)?.0)
}

/// [`clean_loss`] with gradients. Transition parameters get no gradient.
pub fn clean_loss_and_grad(model: &NetAb, batch: &[&LabeledExample], rng: &mut Rng, opts: ForwardOptions) -> Result<Option<(f64, Gradients)>, ModelError> {
    if batch.is_empty() {
        return Ok(None);
    }
    let (loss, grads) = model.batch_loss(batch, rng, opts, false, true)?;
    Ok(Some((loss, grads.expect("requested"))))
}

/// [`noisy_loss`] with gradients for every parameter it touches.
pub fn noisy_loss_and_grad(model: &NetAb, batch: &[&LabeledExample], rng: &mut Rng, opts: ForwardOptions) -> Result<(f64, Gradients), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let (loss, grads) = model.batch_loss(batch, rng, opts, true, true)?;
    Ok((loss, grads.expect("requested")))
}
