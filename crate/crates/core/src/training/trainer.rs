use super::gate::{gate_select, ModelScorer};
use super::{EpochRecord, Method, TrainConfig, TrainError, TrainHistory};
use crate::model::{clean_loss_and_grad, noisy_loss_and_grad, ForwardOptions, ModelConfig, ModelError, NetAb};
use crate::numeric::{adam_step, AdamState, Gradients, NumericError, ParamId, Rng};
use crate::text::{EmbeddingTable, LabeledCorpus, LabeledExample};

/// Rng stream for parameter initialization.
pub const INIT_STREAM: u64 = 1;
/// Rng stream for per-epoch batch shuffling.
pub const SHUFFLE_STREAM: u64 = 2;
/// Rng stream for dropout masks.
pub const DROPOUT_STREAM: u64 = 3;

/// Builds a model whose initialization depends only on `seed`.
pub fn init_model(config: ModelConfig, embeddings: EmbeddingTable, seed: u64) -> Result<NetAb, ModelError> {
    NetAb::new(config, embeddings, &mut Rng::new(seed).fork(INIT_STREAM))
}

/// One Adam state per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    states: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(model: &NetAb) -> Self {
        Self { states: model.params().iter().map(|p| AdamState::new(p.len())).collect() }
    }

    pub fn state(&self, id: ParamId) -> &AdamState {
        &self.states[id.0]
    }

    /// Updates each parameter in `ids` that has a gradient block. Parameters
    /// without a block are left alone and their step count does not advance.
    pub fn step(&mut self, model: &mut NetAb, grads: &Gradients, ids: &[ParamId], lr: f64) -> Result<(), NumericError> {
        for &id in ids {
            if let Some(g) = grads.get(id) {
                let name = model.name(id).to_string();
                adam_step(model.param_mut(id), g, &mut self.states[id.0], lr, &name)?;
            }
        }
        Ok(())
    }
}

/// Outcome of one batch update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub noisy_loss: Option<f64>,
    /// `None` when the gate selected nothing and the clean step was skipped.
    pub clean_loss: Option<f64>,
    /// Examples that reached the clean step.
    pub selected: usize,
    pub batch_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Snapshot with the best validation accuracy (earliest on ties), or the
    /// final model when there is no validation set.
    pub model: NetAb,
    pub history: TrainHistory,
    pub best_epoch: usize,
}

/// Stepwise driver for one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    method: Method,
    model: NetAb,
    optimizers: Vec<Optimizer>,
    shuffle_rng: Rng,
    dropout_rng: Rng,
    epoch: usize,
    step: usize,
    history: TrainHistory,
    best: Option<(f64, usize, NetAb)>,
}

impl Trainer {
    pub fn new(model: NetAb, config: TrainConfig, method: Method) -> Result<Self, TrainError> {
        config.validate()?;
        let count = if config.share_optimizer_state { 1 } else { 2 };
        let root = Rng::new(config.seed);
        Ok(Self {
            optimizers: (0..count).map(|_| Optimizer::new(&model)).collect(),
            shuffle_rng: root.fork(SHUFFLE_STREAM),
            dropout_rng: root.fork(DROPOUT_STREAM),
            config,
            method,
            model,
            epoch: 0,
            step: 0,
            history: TrainHistory::default(),
            best: None,
        })
    }

    pub fn model(&self) -> &NetAb {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.total_epochs
    }

    pub fn in_warmup(&self) -> bool {
        self.method == Method::Netab && self.epoch < self.config.warmup_epochs
    }

    pub fn optimizer_a(&self) -> &Optimizer {
        &self.optimizers[0]
    }

    pub fn optimizer_ab(&self) -> &Optimizer {
        &self.optimizers[self.optimizers.len() - 1]
    }

    fn lr(&self) -> f64 {
        self.config.lr_at(self.epoch)
    }

    fn train_opts(&self) -> ForwardOptions {
        ForwardOptions::training(self.config.dropout_rate).with_pinned_identity(self.config.pin_identity_transition)
    }

    fn check(&self, loss: f64, which: &'static str) -> Result<f64, TrainError> {
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(TrainError::NonFiniteLoss { which, epoch: self.epoch, step: self.step })
        }
    }

    fn ctx<T, E: Into<TrainError>>(&self, r: Result<T, E>) -> Result<T, TrainError> {
        r.map_err(|e| TrainError::Step { epoch: self.epoch, step: self.step, source: Box::new(e.into()) })
    }

    fn apply(&mut self, mut grads: Gradients, slot: usize, ids: &[ParamId]) -> Result<(), TrainError> {
        self.model.mask_gradients(&mut grads, self.config.fine_tune_embeddings);
        if let Some(limit) = self.config.grad_clip_norm {
            let norm = grads.l2_norm();
            if norm > limit {
                grads.scale(limit / norm);
            }
        }
        let slot = slot.min(self.optimizers.len() - 1);
        let lr = self.lr();
        let r = self.optimizers[slot].step(&mut self.model, &grads, ids, lr);
        self.ctx(r)
    }

    fn clean_update(&mut self, batch: &[&LabeledExample], slot: usize) -> Result<Option<f64>, TrainError> {
        let opts = self.train_opts();
        let r = clean_loss_and_grad(&self.model, batch, &mut self.dropout_rng, opts);
        let Some((loss, grads)) = self.ctx(r)? else { return Ok(None) };
        self.check(loss, "clean")?;
        let ids = self.model.shared_ids();
        self.apply(grads, slot, &ids)?;
        Ok(Some(loss))
    }

    /// A-network step on the full batch; transition parameters are untouched.
    pub fn warmup_step(&mut self, batch: &[&LabeledExample]) -> Result<StepStats, TrainError> {
        let clean = self.clean_update(batch, 0)?;
        self.step += 1;
        Ok(StepStats { noisy_loss: None, clean_loss: clean, selected: batch.len(), batch_len: batch.len() })
    }

    /// Ab-network step on the full batch, then an A-network step on the
    /// examples the updated model's gate keeps.
    pub fn alternating_step(&mut self, batch: &[&LabeledExample]) -> Result<StepStats, TrainError> {
        let opts = self.train_opts();
        let r = noisy_loss_and_grad(&self.model, batch, &mut self.dropout_rng, opts);
        let (noisy, grads) = self.ctx(r)?;
        self.check(noisy, "noisy")?;
        let all: Vec<ParamId> = self.model.param_ids().collect();
        self.apply(grads, 1, &all)?;

        let selected = if self.config.force_gate_open {
            batch.to_vec()
        } else {
            let scorer = ModelScorer { model: &self.model, scores: self.config.gate_scores, pin_identity: self.config.pin_identity_transition };
            let r = gate_select(batch, &scorer);
            self.ctx(r)?
        };
        let clean = self.clean_update(&selected, 0)?;
        self.step += 1;
        Ok(StepStats { noisy_loss: Some(noisy), clean_loss: clean, selected: selected.len(), batch_len: batch.len() })
    }

    /// Plain CNN: the two optimizer slots of an alternating step both take a
    /// clean step on the full batch.
    pub fn baseline_step(&mut self, batch: &[&LabeledExample]) -> Result<StepStats, TrainError> {
        let first = self.clean_update(batch, 1)?.expect("non-empty batch");
        let second = self.clean_update(batch, 0)?.expect("non-empty batch");
        self.step += 1;
        Ok(StepStats { noisy_loss: None, clean_loss: Some(0.5 * (first + second)), selected: batch.len(), batch_len: batch.len() })
    }

    /// Runs one epoch over shuffled batches and records it.
    pub fn run_epoch(&mut self, train: &LabeledCorpus, val: Option<&LabeledCorpus>) -> Result<&EpochRecord, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyTrainSet);
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        self.shuffle_rng.shuffle(&mut order);
        let warmup = self.in_warmup();
        let (mut noisy, mut clean) = (Vec::new(), Vec::new());
        let (mut selected, mut seen) = (0, 0);
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| &train.examples[i]).collect();
            let stats = match (self.method, warmup) {
                (Method::Cnn, _) => self.baseline_step(&batch)?,
                (Method::Netab, true) => self.warmup_step(&batch)?,
                (Method::Netab, false) => self.alternating_step(&batch)?,
            };
            noisy.extend(stats.noisy_loss);
            clean.extend(stats.clean_loss);
            selected += stats.selected;
            seen += stats.batch_len;
        }
        let gated = self.method == Method::Netab && !warmup;
        let val_acc = match val {
            Some(v) if !v.is_empty() => Some(self.ctx(accuracy(&self.model, v))?),
            _ => None,
        };
        let record = EpochRecord {
            epoch: self.epoch,
            noisy_loss: mean(&noisy),
            clean_loss: mean(&clean),
            gate_fraction: gated.then(|| selected as f64 / seen as f64),
            val_acc,
            lr: self.lr(),
        };
        if let Some(acc) = val_acc {
            if self.best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                self.best = Some((acc, self.epoch, self.model.clone()));
            }
        }
        self.history.records.push(record);
        self.epoch += 1;
        self.step = 0;
        Ok(self.history.records.last().expect("just pushed"))
    }

    pub fn finish(self) -> TrainOutcome {
        let last = self.epoch.saturating_sub(1);
        match self.best {
            Some((_, epoch, model)) => TrainOutcome { model, history: self.history, best_epoch: epoch },
            None => TrainOutcome { model: self.model, history: self.history, best_epoch: last },
        }
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Clean-head accuracy in inference mode.
pub fn accuracy(model: &NetAb, corpus: &LabeledCorpus) -> Result<f64, ModelError> {
    let mut correct = 0usize;
    for ex in &corpus.examples {
        correct += usize::from(model.predict(&ex.ids)? == ex.label);
    }
    Ok(correct as f64 / corpus.len().max(1) as f64)
}

/// Full run with the given method.
pub fn train_with(method: Method, model: NetAb, train: &LabeledCorpus, val: Option<&LabeledCorpus>, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let mut trainer = Trainer::new(model, config.clone(), method)?;
    while !trainer.is_finished() {
        let r = trainer.run_epoch(train, val)?;
        log::debug!("{method} epoch {} clean {:?} noisy {:?} gate {:?} val {:?}", r.epoch, r.clean_loss, r.noisy_loss, r.gate_fraction, r.val_acc);
    }
    Ok(trainer.finish())
}

/// NetAb: warm-up, then alternating Ab / A steps.
pub fn train(model: NetAb, train: &LabeledCorpus, val: Option<&LabeledCorpus>, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(Method::Netab, model, train, val, config)
}

pub fn train_baseline_cnn(model: NetAb, train: &LabeledCorpus, val: Option<&LabeledCorpus>, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(Method::Cnn, model, train, val, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::toy_corpus;
    use crate::text::{corrupt_labels, vocabulary_for, LabeledCorpus, MAX_LEN};

    fn small_config() -> ModelConfig {
        ModelConfig { embed_dim: 8, feature_maps: 4, windows: [2, 3, 4], max_len: MAX_LEN, classes: 2 }
    }

    fn toy() -> (LabeledCorpus, usize) {
        let records = toy_corpus();
        let vocab = vocabulary_for(&records);
        (LabeledCorpus::encode("toy", &records, &vocab, MAX_LEN), vocab.len())
    }

    fn model(vocab: usize, seed: u64) -> NetAb {
        let table = EmbeddingTable::random(vocab, 8, &mut Rng::new(seed).fork(9));
        init_model(small_config(), table, seed).unwrap()
    }

    fn config(total: usize, warmup: usize) -> TrainConfig {
        TrainConfig { total_epochs: total, warmup_epochs: warmup, batch_size: 10, lr: 0.01, seed: 3, ..TrainConfig::default() }
    }

    #[test]
    fn warmup_leaves_transition_bitwise() {
        let (corpus, v) = toy();
        let mut t = Trainer::new(model(v, 1), config(8, 5), Method::Netab).unwrap();
        let ids = t.model().transition_ids();
        let before: Vec<Vec<f64>> = ids.iter().map(|&i| t.model().param(i).values().to_vec()).collect();
        for _ in 0..5 {
            t.run_epoch(&corpus, None).unwrap();
        }
        let after: Vec<Vec<f64>> = ids.iter().map(|&i| t.model().param(i).values().to_vec()).collect();
        assert_eq!(before, after);
        t.run_epoch(&corpus, None).unwrap();
        assert_ne!(ids.iter().map(|&i| t.model().param(i).values().to_vec()).collect::<Vec<_>>(), after);
    }

    #[test]
    fn warmup_clean_loss_decreases() {
        let (corpus, v) = toy();
        let cfg = TrainConfig { dropout_rate: 0.0, ..config(6, 5) };
        let mut t = Trainer::new(model(v, 2), cfg, Method::Netab).unwrap();
        let refs: Vec<&LabeledExample> = corpus.examples.iter().collect();
        let loss = |m: &NetAb| crate::model::clean_loss(m, &refs, &mut Rng::new(0), ForwardOptions::inference()).unwrap().unwrap();
        let mut last = loss(t.model());
        for _ in 0..5 {
            t.run_epoch(&corpus, None).unwrap();
            let now = loss(t.model());
            assert!(now < last, "{now} !< {last}");
            last = now;
        }
    }

    #[test]
    fn record_count_matches_epochs() {
        let (corpus, v) = toy();
        let out = train(model(v, 3), &corpus, Some(&corpus), &config(6, 5)).unwrap();
        assert_eq!(out.history.len(), 6);
        assert!(out.history.records[..5].iter().all(|r| r.noisy_loss.is_none() && r.gate_fraction.is_none()));
        assert!(out.history.records[5].noisy_loss.is_some());
        for (k, r) in out.history.records.iter().enumerate() {
            assert_eq!(r.epoch, k);
            assert!((r.lr - 0.01 * 0.96f64.powi(k as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let (corpus, v) = toy();
        let out = train(model(v, 4), &corpus, Some(&corpus), &config(20, 5)).unwrap();
        assert_eq!(out.history.best_val_acc(), Some(1.0));
        assert_eq!(accuracy(&out.model, &corpus).unwrap(), 1.0);
        let base = train_baseline_cnn(model(v, 4), &corpus, Some(&corpus), &config(20, 5)).unwrap();
        assert_eq!(base.history.best_val_acc(), Some(1.0));
    }

    #[test]
    fn gate_opens_on_clean_separable_data() {
        let (corpus, v) = toy();
        let out = train(model(v, 5), &corpus, None, &config(25, 5)).unwrap();
        let best = out.history.records.iter().filter_map(|r| r.gate_fraction).fold(0.0, f64::max);
        assert!(best >= 0.9, "gate fraction peaked at {best}");
    }

    #[test]
    fn runs_are_deterministic() {
        let (corpus, v) = toy();
        let noisy = corrupt_labels(&corpus, 0.2, &mut Rng::new(8)).unwrap();
        for method in [Method::Netab, Method::Cnn] {
            let a = train_with(method, model(v, 6), &noisy, Some(&corpus), &config(8, 2)).unwrap();
            let b = train_with(method, model(v, 6), &noisy, Some(&corpus), &config(8, 2)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn best_snapshot_prefers_earliest_tie() {
        let (corpus, v) = toy();
        let out = train(model(v, 4), &corpus, Some(&corpus), &config(20, 5)).unwrap();
        let first_max = out.history.records.iter().position(|r| r.val_acc == out.history.best_val_acc()).unwrap();
        assert_eq!(out.best_epoch, first_max);
    }

    #[test]
    fn empty_gate_skips_clean_step() {
        let (corpus, v) = toy();
        // flipping every label makes a warmed-up gate reject nearly everything
        let mut flipped = corpus.clone();
        for ex in &mut flipped.examples {
            ex.label = 1 - ex.label;
        }
        let mut t = Trainer::new(model(v, 7), config(30, 10), Method::Netab).unwrap();
        for _ in 0..10 {
            t.run_epoch(&corpus, None).unwrap();
        }
        let batch: Vec<&LabeledExample> = flipped.examples.iter().take(4).collect();
        let a_steps = t.optimizer_a().state(t.model().layout().head_bias).step;
        let ab_steps = t.optimizer_ab().state(t.model().layout().head_bias).step;
        let stats = t.alternating_step(&batch).unwrap();
        assert_eq!(stats.selected, 0);
        assert_eq!(stats.clean_loss, None);
        assert!(stats.noisy_loss.is_some());
        assert_eq!(t.optimizer_a().state(t.model().layout().head_bias).step, a_steps);
        assert_eq!(t.optimizer_ab().state(t.model().layout().head_bias).step, ab_steps + 1);
    }

    #[test]
    fn shared_state_uses_one_optimizer() {
        let (corpus, v) = toy();
        let cfg = TrainConfig { share_optimizer_state: true, ..config(3, 1) };
        let mut t = Trainer::new(model(v, 1), cfg, Method::Netab).unwrap();
        t.run_epoch(&corpus, None).unwrap();
        t.run_epoch(&corpus, None).unwrap();
        assert!(std::ptr::eq(t.optimizer_a(), t.optimizer_ab()));
        // 4 warm-up batches, then 4 batches with up to two steps each
        let s = t.optimizer_a().state(t.model().layout().head_bias).step;
        assert!(s > 8, "{s}");
    }

    #[test]
    fn non_finite_loss_reports_position() {
        let (corpus, v) = toy();
        let mut m = model(v, 1);
        let id = m.layout().head_weight;
        m.param_mut(id).values_mut()[0] = f64::NAN;
        let err = train(m, &corpus, None, &config(6, 5)).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteLoss { epoch: 0, step: 0, .. }), "{err}");
    }
}
