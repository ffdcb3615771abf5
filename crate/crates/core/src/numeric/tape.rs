//! Per-batch computation record for reverse-mode gradients.
//!
//! A [`Tape`] borrows the parameter tensors, records every forward op as a
//! node, and replays the nodes in reverse in [`Tape::backward`]. Parameter
//! leaves are memoized so every use of a parameter within one tape
//! accumulates into a single gradient buffer.

use serde::{Deserialize, Serialize};

use super::ops;
use super::{NumericError, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Index of a parameter tensor in the slice a [`Tape`] borrows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Constant,
    Embedding { table: NodeId, ids: Vec<usize> },
    Dropout { input: NodeId, mask: Vec<f64> },
    Conv1d { input: NodeId, kernels: NodeId, bias: NodeId },
    Relu { input: NodeId },
    MaxOverTime { input: NodeId, argmax: Vec<usize> },
    Concat { inputs: Vec<NodeId> },
    Affine { weight: NodeId, bias: NodeId, input: NodeId },
    Tanh { input: NodeId },
    Mul { a: NodeId, b: NodeId },
    Softmax { input: NodeId },
    Stack { rows: Vec<NodeId> },
    Mix { probs: NodeId, matrix: NodeId },
    CrossEntropy { probs: NodeId, label: usize },
    Mean { inputs: Vec<NodeId> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    // `None` for parameter leaves, whose values live in the borrowed slice.
    value: Option<Vec<f64>>,
    op: Op,
}

/// Gradients of one scalar w.r.t. each parameter tensor of a tape.
/// Parameters the scalar does not depend on have no buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    blocks: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn empty(param_count: usize) -> Self {
        Self { blocks: vec![None; param_count] }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.blocks.get(id.0).and_then(|b| b.as_deref())
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Vec<f64>> {
        self.blocks.get_mut(id.0).and_then(|b| b.as_mut())
    }

    pub fn remove(&mut self, id: ParamId) {
        if let Some(b) = self.blocks.get_mut(id.0) {
            *b = None;
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.blocks.iter().enumerate().filter_map(|(i, b)| b.as_deref().map(|g| (ParamId(i), g)))
    }

    pub fn l2_norm(&self) -> f64 {
        self.iter().flat_map(|(_, g)| g.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.blocks.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

pub struct Tape<'p> {
    params: &'p [Tensor],
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Self { params, nodes: Vec::new(), param_nodes: vec![None; params.len()] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params[p.0].values(),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value: Some(value), op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        self.nodes.push(Node { shape: self.params[id.0].shape().to_vec(), value: None, op: Op::Param(id) });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_values(), Op::Constant)
    }

    /// Rows of a `V×d` table selected by `ids`, giving an `ids.len()×d` matrix.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, NumericError> {
        let (rows, dim) = match self.shape(table) {
            [v, d] => (*v, *d),
            s => return Err(NumericError::Shape { op: "embedding", expected: "table of rank 2".into(), actual: format!("{s:?}") }),
        };
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(NumericError::Shape { op: "embedding", expected: format!("ids < {rows}"), actual: format!("id {bad}") });
        }
        let src = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            out.extend_from_slice(&src[i * dim..(i + 1) * dim]);
        }
        Ok(self.push(vec![ids.len(), dim], out, Op::Embedding { table, ids: ids.to_vec() }))
    }

    /// Inverted dropout; returns `input` unchanged when inactive.
    pub fn dropout(&mut self, input: NodeId, rate: f64, rng: &mut Rng, training: bool) -> Result<NodeId, NumericError> {
        let Some(mask) = ops::dropout_mask(self.value(input).len(), rate, rng, training)? else {
            return Ok(input);
        };
        let out = self.value(input).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(input).to_vec();
        Ok(self.push(shape, out, Op::Dropout { input, mask }))
    }

    pub fn conv1d(&mut self, input: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId, NumericError> {
        let (len, dim) = match self.shape(input) {
            [l, d] => (*l, *d),
            s => return Err(NumericError::Shape { op: "conv1d_valid", expected: "input of rank 2 (L×d)".into(), actual: format!("{s:?}") }),
        };
        let (width, kdim, maps) = match self.shape(kernels) {
            [w, d, m] => (*w, *d, *m),
            s => return Err(NumericError::Shape { op: "conv1d_valid", expected: "kernels of rank 3 (w×d×m)".into(), actual: format!("{s:?}") }),
        };
        if kdim != dim {
            return Err(NumericError::Shape {
                op: "conv1d_valid",
                expected: format!("kernel depth d={dim} (input width)"),
                actual: format!("kernel depth d={kdim}"),
            });
        }
        if self.shape(bias) != [maps] {
            return Err(NumericError::Shape { op: "conv1d_valid", expected: format!("bias of shape [{maps}]"), actual: format!("{:?}", self.shape(bias)) });
        }
        if len < width {
            return Err(NumericError::InputTooShort { len, width });
        }
        let out = ops::conv1d_forward(self.value(input), len, dim, self.value(kernels), width, maps, self.value(bias));
        Ok(self.push(vec![len - width + 1, maps], out, Op::Conv1d { input, kernels, bias }))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let out = self.value(input).iter().map(|v| v.max(0.0)).collect();
        let shape = self.shape(input).to_vec();
        self.push(shape, out, Op::Relu { input })
    }

    pub fn max_over_time(&mut self, input: NodeId) -> Result<NodeId, NumericError> {
        let (steps, maps) = match self.shape(input) {
            [t, m] => (*t, *m),
            s => return Err(NumericError::Shape { op: "max_over_time", expected: "input of rank 2 (T×m)".into(), actual: format!("{s:?}") }),
        };
        if steps == 0 {
            return Err(NumericError::EmptyTimeAxis);
        }
        let (out, argmax) = ops::max_over_time_forward(self.value(input), steps, maps);
        Ok(self.push(vec![maps], out, Op::MaxOverTime { input, argmax }))
    }

    /// Concatenation of rank-1 nodes.
    pub fn concat(&mut self, inputs: &[NodeId]) -> NodeId {
        let out: Vec<f64> = inputs.iter().flat_map(|&i| self.value(i).iter().copied()).collect();
        self.push(vec![out.len()], out, Op::Concat { inputs: inputs.to_vec() })
    }

    /// `weight · input + bias` with `weight` of shape `c×n`.
    pub fn affine(&mut self, weight: NodeId, bias: NodeId, input: NodeId) -> Result<NodeId, NumericError> {
        let (rows, cols) = match self.shape(weight) {
            [r, c] => (*r, *c),
            s => return Err(NumericError::Shape { op: "affine", expected: "weight of rank 2".into(), actual: format!("{s:?}") }),
        };
        if self.value(input).len() != cols || self.value(bias).len() != rows {
            return Err(NumericError::Shape {
                op: "affine",
                expected: format!("input [{cols}] and bias [{rows}]"),
                actual: format!("input {:?} and bias {:?}", self.shape(input), self.shape(bias)),
            });
        }
        let (w, b, x) = (self.value(weight), self.value(bias), self.value(input));
        let out = (0..rows).map(|r| b[r] + w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, c)| a * c).sum::<f64>()).collect();
        Ok(self.push(vec![rows], out, Op::Affine { weight, bias, input }))
    }

    pub fn tanh(&mut self, input: NodeId) -> NodeId {
        let out = self.value(input).iter().map(|v| v.tanh()).collect();
        let shape = self.shape(input).to_vec();
        self.push(shape, out, Op::Tanh { input })
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        if self.shape(a) != self.shape(b) {
            return Err(NumericError::Shape { op: "mul", expected: format!("{:?}", self.shape(a)), actual: format!("{:?}", self.shape(b)) });
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Mul { a, b }))
    }

    pub fn softmax(&mut self, input: NodeId) -> NodeId {
        let out = ops::softmax_slice(self.value(input));
        let shape = self.shape(input).to_vec();
        self.push(shape, out, Op::Softmax { input })
    }

    /// Stacks equal-length rank-1 nodes into a matrix, one per row.
    pub fn stack(&mut self, rows: &[NodeId]) -> Result<NodeId, NumericError> {
        let cols = self.value(rows[0]).len();
        if let Some(r) = rows.iter().find(|&&r| self.value(r).len() != cols) {
            return Err(NumericError::Shape { op: "stack", expected: format!("rows of length {cols}"), actual: format!("{:?}", self.shape(*r)) });
        }
        let out: Vec<f64> = rows.iter().flat_map(|&r| self.value(r).iter().copied()).collect();
        Ok(self.push(vec![rows.len(), cols], out, Op::Stack { rows: rows.to_vec() }))
    }

    /// `out[j] = Σ_i probs[i] · matrix[i][j]`, i.e. the mixture of the
    /// matrix rows weighted by `probs`.
    pub fn mix(&mut self, probs: NodeId, matrix: NodeId) -> Result<NodeId, NumericError> {
        let n = self.value(probs).len();
        let cols = match self.shape(matrix) {
            [r, c] if *r == n => *c,
            s => return Err(NumericError::Shape { op: "mix", expected: format!("matrix with {n} rows"), actual: format!("{s:?}") }),
        };
        let (p, m) = (self.value(probs), self.value(matrix));
        let mut out = vec![0.0; cols];
        for (i, &pi) in p.iter().enumerate() {
            for (o, &q) in out.iter_mut().zip(&m[i * cols..(i + 1) * cols]) {
                *o += pi * q;
            }
        }
        Ok(self.push(vec![cols], out, Op::Mix { probs, matrix }))
    }

    pub fn cross_entropy(&mut self, probs: NodeId, label: usize) -> Result<NodeId, NumericError> {
        let classes = self.value(probs).len();
        if label >= classes {
            return Err(NumericError::LabelOutOfRange { label, classes });
        }
        let loss = ops::floored_nll(self.value(probs)[label]);
        Ok(self.push(vec![1], vec![loss], Op::CrossEntropy { probs, label }))
    }

    /// Mean of scalar nodes.
    pub fn mean(&mut self, inputs: &[NodeId]) -> NodeId {
        let total: f64 = inputs.iter().map(|&i| self.scalar(i)).sum();
        self.push(vec![1], vec![total / inputs.len() as f64], Op::Mean { inputs: inputs.to_vec() })
    }

    /// Gradients of the scalar node `output` w.r.t. every parameter it
    /// depends on.
    pub fn backward(&self, output: NodeId) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0; self.value(output).len()]);
        let mut out = Gradients::empty(self.params.len());

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let (below, _) = grads.split_at_mut(idx);
            match &node.op {
                Op::Param(p) => out.blocks[p.0] = Some(g),
                Op::Constant => {}
                Op::Embedding { table, ids } => {
                    let dim = node.shape[1];
                    let dt = slot(below, *table, self.value(*table).len());
                    for (t, &i) in ids.iter().enumerate() {
                        for (a, &b) in dt[i * dim..(i + 1) * dim].iter_mut().zip(&g[t * dim..(t + 1) * dim]) {
                            *a += b;
                        }
                    }
                }
                Op::Dropout { input, mask } => {
                    let di = slot(below, *input, g.len());
                    for ((a, &b), &m) in di.iter_mut().zip(&g).zip(mask) {
                        *a += b * m;
                    }
                }
                Op::Conv1d { input, kernels, bias } => {
                    let kshape = self.shape(*kernels);
                    let (width, dim, maps) = (kshape[0], kshape[1], kshape[2]);
                    let x = self.value(*input);
                    let k = self.value(*kernels);
                    let (xl, kl, bl) = (x.len(), k.len(), maps);
                    // The three inputs are distinct nodes; take their slots one at a time.
                    let mut di = take_slot(below, *input, xl);
                    let mut dk = take_slot(below, *kernels, kl);
                    let mut db = take_slot(below, *bias, bl);
                    ops::conv1d_backward(x, dim, k, width, maps, &g, Some(&mut di), Some(&mut dk), Some(&mut db));
                    below[input.0] = Some(di);
                    below[kernels.0] = Some(dk);
                    below[bias.0] = Some(db);
                }
                Op::Relu { input } => {
                    let y = node.value.as_deref().unwrap_or_default();
                    let di = slot(below, *input, g.len());
                    for ((a, &b), &v) in di.iter_mut().zip(&g).zip(y) {
                        if v > 0.0 {
                            *a += b;
                        }
                    }
                }
                Op::MaxOverTime { input, argmax } => {
                    let len = self.value(*input).len();
                    let di = slot(below, *input, len);
                    ops::max_over_time_backward(argmax, node.shape[0], &g, di);
                }
                Op::Concat { inputs } => {
                    let mut offset = 0;
                    for &i in inputs {
                        let n = self.value(i).len();
                        let di = slot(below, i, n);
                        for (a, &b) in di.iter_mut().zip(&g[offset..offset + n]) {
                            *a += b;
                        }
                        offset += n;
                    }
                }
                Op::Affine { weight, bias, input } => {
                    let cols = self.shape(*weight)[1];
                    let (w, x) = (self.value(*weight), self.value(*input));
                    {
                        let dw = slot(below, *weight, w.len());
                        for (r, &gr) in g.iter().enumerate() {
                            for (a, &xv) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                                *a += gr * xv;
                            }
                        }
                    }
                    {
                        let db = slot(below, *bias, g.len());
                        for (a, &b) in db.iter_mut().zip(&g) {
                            *a += b;
                        }
                    }
                    let dx = slot(below, *input, cols);
                    for (r, &gr) in g.iter().enumerate() {
                        for (a, &wv) in dx.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                            *a += gr * wv;
                        }
                    }
                }
                Op::Tanh { input } => {
                    let y = node.value.as_deref().unwrap_or_default();
                    ops::tanh_backward(y, &g, slot(below, *input, g.len()));
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    {
                        let da = slot(below, *a, g.len());
                        for ((d, &gv), &y) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gv * y;
                        }
                    }
                    let db = slot(below, *b, g.len());
                    for ((d, &gv), &x) in db.iter_mut().zip(&g).zip(av) {
                        *d += gv * x;
                    }
                }
                Op::Softmax { input } => {
                    let y = node.value.as_deref().unwrap_or_default();
                    ops::softmax_backward(y, &g, slot(below, *input, g.len()));
                }
                Op::Stack { rows } => {
                    let cols = node.shape[1];
                    for (r, &row) in rows.iter().enumerate() {
                        let dr = slot(below, row, cols);
                        for (a, &b) in dr.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                            *a += b;
                        }
                    }
                }
                Op::Mix { probs, matrix } => {
                    let cols = node.shape[0];
                    let (p, m) = (self.value(*probs), self.value(*matrix));
                    {
                        let dp = slot(below, *probs, p.len());
                        for (i, d) in dp.iter_mut().enumerate() {
                            *d += m[i * cols..(i + 1) * cols].iter().zip(&g).map(|(q, gv)| q * gv).sum::<f64>();
                        }
                    }
                    let dm = slot(below, *matrix, m.len());
                    for (i, &pi) in p.iter().enumerate() {
                        for (d, &gv) in dm[i * cols..(i + 1) * cols].iter_mut().zip(&g) {
                            *d += pi * gv;
                        }
                    }
                }
                Op::CrossEntropy { probs, label } => {
                    let p = self.value(*probs)[*label];
                    let len = self.value(*probs).len();
                    slot(below, *probs, len)[*label] += g[0] * ops::cross_entropy_grad(p);
                }
                Op::Mean { inputs } => {
                    let share = g[0] / inputs.len() as f64;
                    for &i in inputs {
                        slot(below, i, 1)[0] += share;
                    }
                }
            }
        }
        out
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

fn take_slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> Vec<f64> {
    grads[id.0].take().unwrap_or_else(|| vec![0.0; len])
}
