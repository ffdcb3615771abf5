use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numeric::{Gradients, ParamId, Rng, Tensor};
use crate::text::{EmbeddingTable, MAX_LEN, NUM_CLASSES, PAD_ID};

/// Half-width of the uniform range for kernels, head and transition weights.
pub const WEIGHT_INIT_RANGE: f64 = 0.01;
/// Initial transition bias; keeps `tanh` in its positive range so the
/// `±1` scale vectors make each initial row favour its own class.
pub const TRANSITION_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub feature_maps: usize,
    pub windows: [usize; 3],
    pub max_len: usize,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { embed_dim: 300, feature_maps: 100, windows: [3, 4, 5], max_len: MAX_LEN, classes: NUM_CLASSES }
    }
}

impl ModelConfig {
    pub fn encoding_dim(&self) -> usize {
        self.windows.len() * self.feature_maps
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim == 0 || self.feature_maps == 0 || self.classes < 2 {
            return Err(ModelError::Config(format!("degenerate model config {self:?}")));
        }
        if let Some(w) = self.windows.iter().find(|&&w| w == 0 || w > self.max_len) {
            return Err(ModelError::Config(format!("window {w} must be in 1..={}", self.max_len)));
        }
        Ok(())
    }
}

/// Parameter ids of one transition row generator `(W_i, b_i, f_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionIds {
    pub weight: ParamId,
    pub bias: ParamId,
    pub scale: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embeddings: ParamId,
    pub kernels: [ParamId; 3],
    pub conv_bias: [ParamId; 3],
    pub head_weight: ParamId,
    pub head_bias: ParamId,
    pub transition: Vec<TransitionIds>,
}

impl Layout {
    fn new(classes: usize) -> Self {
        let transition = (0..classes)
            .map(|i| {
                let base = 9 + 3 * i;
                TransitionIds { weight: ParamId(base), bias: ParamId(base + 1), scale: ParamId(base + 2) }
            })
            .collect();
        Self {
            embeddings: ParamId(0),
            kernels: [ParamId(1), ParamId(3), ParamId(5)],
            conv_bias: [ParamId(2), ParamId(4), ParamId(6)],
            head_weight: ParamId(7),
            head_bias: ParamId(8),
            transition,
        }
    }

    fn param_count(classes: usize) -> usize {
        9 + 3 * classes
    }
}

/// Encoder parameters shared by both networks.
#[derive(Debug, Clone, Copy)]
pub struct EncoderParams<'a> {
    pub embeddings: &'a Tensor,
    pub kernels: [&'a Tensor; 3],
    pub biases: [&'a Tensor; 3],
}

/// Clean softmax classifier `c×H` weight and `c` bias.
#[derive(Debug, Clone, Copy)]
pub struct CleanHead<'a> {
    pub weight: &'a Tensor,
    pub bias: &'a Tensor,
}

/// Row generators of the transition layer, one `(W_i, b_i, f_i)` per clean
/// class.
#[derive(Debug, Clone)]
pub struct TransitionParams<'a> {
    pub rows: Vec<(&'a Tensor, &'a Tensor, &'a Tensor)>,
}

/// The clean-label classifier: encoder plus clean head.
#[derive(Debug, Clone, Copy)]
pub struct ANetwork<'a> {
    pub encoder: EncoderParams<'a>,
    pub head: CleanHead<'a>,
}

/// The noisy-label classifier: the same encoder and head plus the
/// transition layer.
#[derive(Debug, Clone)]
pub struct AbNetwork<'a> {
    pub encoder: EncoderParams<'a>,
    pub head: CleanHead<'a>,
    pub transition: TransitionParams<'a>,
}

/// All trainable state. Both networks are views over the same tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct NetAb {
    config: ModelConfig,
    params: Vec<Tensor>,
    names: Vec<String>,
    layout: Layout,
}

fn uniform(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE)).collect()).expect("shape matches")
}

impl NetAb {
    /// Fresh model around `embeddings`; all other parameters drawn from `rng`.
    pub fn new(config: ModelConfig, embeddings: EmbeddingTable, rng: &mut Rng) -> Result<Self, ModelError> {
        config.validate()?;
        if embeddings.dim() != config.embed_dim {
            return Err(ModelError::Config(format!(
                "embedding table has dimension {} but the model expects {}",
                embeddings.dim(),
                config.embed_dim
            )));
        }
        let (c, hdim, d, m) = (config.classes, config.encoding_dim(), config.embed_dim, config.feature_maps);
        let mut params = Vec::with_capacity(Layout::param_count(c));
        let mut names = Vec::with_capacity(params.capacity());
        params.push(embeddings.weights);
        names.push("embeddings".to_string());
        for w in config.windows {
            params.push(uniform(vec![w, d, m], rng));
            names.push(format!("conv{w}.kernel"));
            params.push(uniform(vec![m], rng));
            names.push(format!("conv{w}.bias"));
        }
        params.push(uniform(vec![c, hdim], rng));
        names.push("head.weight".into());
        params.push(uniform(vec![c], rng));
        names.push("head.bias".into());
        for i in 0..c {
            params.push(uniform(vec![c, hdim], rng));
            names.push(format!("transition.{i}.weight"));
            let bias = (0..c).map(|_| TRANSITION_BIAS_INIT + rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE)).collect();
            params.push(Tensor::vector(bias));
            names.push(format!("transition.{i}.bias"));
            params.push(Tensor::vector((0..c).map(|j| if j == i { 1.0 } else { -1.0 }).collect()));
            names.push(format!("transition.{i}.scale"));
        }
        Ok(Self { config, params, names, layout: Layout::new(c) })
    }

    /// Rebuilds a model from named tensors, checking every shape.
    pub fn from_parts(config: ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self, ModelError> {
        config.validate()?;
        let template = Self::shapes(&config);
        if named.len() != template.len() {
            return Err(ModelError::Config(format!("expected {} parameter tensors, found {}", template.len(), named.len())));
        }
        let mut params = Vec::with_capacity(named.len());
        let mut names = Vec::with_capacity(named.len());
        for ((name, tensor), (want_name, want_shape)) in named.into_iter().zip(template) {
            if name != want_name || (want_name != "embeddings" && tensor.shape() != want_shape.as_slice()) {
                return Err(ModelError::Config(format!(
                    "parameter `{name}` {:?} does not match expected `{want_name}` {want_shape:?}",
                    tensor.shape()
                )));
            }
            params.push(tensor);
            names.push(name);
        }
        let emb = params[0].shape();
        if emb.len() != 2 || emb[1] != config.embed_dim {
            return Err(ModelError::Config(format!("embeddings shape {emb:?} does not have width {}", config.embed_dim)));
        }
        Ok(Self { layout: Layout::new(config.classes), config, params, names })
    }

    /// Names and shapes of all parameters except the embedding row count.
    fn shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let (c, h, d, m) = (config.classes, config.encoding_dim(), config.embed_dim, config.feature_maps);
        let mut out = vec![("embeddings".to_string(), vec![0, d])];
        for w in config.windows {
            out.push((format!("conv{w}.kernel"), vec![w, d, m]));
            out.push((format!("conv{w}.bias"), vec![m]));
        }
        out.push(("head.weight".into(), vec![c, h]));
        out.push(("head.bias".into(), vec![c]));
        for i in 0..c {
            out.push((format!("transition.{i}.weight"), vec![c, h]));
            out.push((format!("transition.{i}.bias"), vec![c]));
            out.push((format!("transition.{i}.scale"), vec![c]));
        }
        out
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn param(&self, id: ParamId) -> &Tensor {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn vocab_size(&self) -> usize {
        self.params[self.layout.embeddings.0].shape()[0]
    }

    /// Encoder, head and embeddings: everything the clean loss trains.
    pub fn shared_ids(&self) -> Vec<ParamId> {
        let l = &self.layout;
        let mut ids = vec![l.embeddings];
        for i in 0..3 {
            ids.push(l.kernels[i]);
            ids.push(l.conv_bias[i]);
        }
        ids.push(l.head_weight);
        ids.push(l.head_bias);
        ids
    }

    pub fn transition_ids(&self) -> Vec<ParamId> {
        self.layout.transition.iter().flat_map(|t| [t.weight, t.bias, t.scale]).collect()
    }

    pub fn encoder(&self) -> EncoderParams<'_> {
        let l = &self.layout;
        EncoderParams {
            embeddings: self.param(l.embeddings),
            kernels: l.kernels.map(|id| self.param(id)),
            biases: l.conv_bias.map(|id| self.param(id)),
        }
    }

    pub fn head(&self) -> CleanHead<'_> {
        CleanHead { weight: self.param(self.layout.head_weight), bias: self.param(self.layout.head_bias) }
    }

    pub fn transition(&self) -> TransitionParams<'_> {
        TransitionParams {
            rows: self.layout.transition.iter().map(|t| (self.param(t.weight), self.param(t.bias), self.param(t.scale))).collect(),
        }
    }

    pub fn a_network(&self) -> ANetwork<'_> {
        ANetwork { encoder: self.encoder(), head: self.head() }
    }

    pub fn ab_network(&self) -> AbNetwork<'_> {
        AbNetwork { encoder: self.encoder(), head: self.head(), transition: self.transition() }
    }

    /// Zeroes the padding row's gradient, and drops the whole embedding
    /// gradient when embeddings are frozen.
    pub fn mask_gradients(&self, grads: &mut Gradients, fine_tune_embeddings: bool) {
        let id = self.layout.embeddings;
        if !fine_tune_embeddings {
            grads.remove(id);
            return;
        }
        let d = self.config.embed_dim;
        if let Some(g) = grads.get_mut(id) {
            g[PAD_ID * d..(PAD_ID + 1) * d].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Flat copy of all parameter values, in layout order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.values().iter().copied()).collect()
    }

    /// Overwrites all parameter values from a flat vector produced by
    /// [`NetAb::flat_values`].
    pub fn set_flat_values(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.len();
            p.values_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat length");
    }

    /// Start offset of each parameter within [`NetAb::flat_values`].
    pub fn flat_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.params
            .iter()
            .map(|p| {
                let o = acc;
                acc += p.len();
                o
            })
            .collect()
    }

    /// Flattens `grads` to the [`NetAb::flat_values`] layout; absent blocks
    /// become zeros.
    pub fn flatten_gradients(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.params.iter().map(Tensor::len).sum());
        for (i, p) in self.params.iter().enumerate() {
            match grads.get(ParamId(i)) {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat_n(0.0, p.len())),
            }
        }
        out
    }
}
