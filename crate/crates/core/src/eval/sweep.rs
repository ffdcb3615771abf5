use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::{evaluate, EvalError, SweepResult};
use crate::model::{ModelConfig, NetAb};
use crate::numeric::Rng;
use crate::text::{corrupt_labels, EmbeddingTable, Split, MAX_NOISE_RATE};
use crate::training::{init_model, train_with, Method, TrainConfig};

/// Rng stream for label corruption of the training split.
pub const CORRUPT_STREAM: u64 = 4;
/// Rng stream for randomly initialized word vectors.
pub const EMBED_STREAM: u64 = 5;

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub model: ModelConfig,
    /// `seed` is overwritten per cell.
    pub train: TrainConfig,
    /// Pretrained table shared by every run; `None` draws a random table per
    /// seed.
    pub embeddings: Option<EmbeddingTable>,
    pub workers: usize,
    pub record_wall_time: bool,
}

impl SweepSpec {
    pub fn new(rates: Vec<f64>, seeds: Vec<u64>, model: ModelConfig, train: TrainConfig) -> Self {
        Self { rates, seeds, methods: vec![Method::Netab, Method::Cnn], model, train, embeddings: None, workers: 1, record_wall_time: false }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if let Some(&r) = self.rates.iter().find(|r| !(0.0..=MAX_NOISE_RATE).contains(*r)) {
            return Err(EvalError::NoiseRate(r));
        }
        if self.rates.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return Err(EvalError::Config("sweep needs at least one rate, seed and method".into()));
        }
        if self.workers == 0 {
            return Err(EvalError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Model shared by both methods for one seed.
fn initial_model(spec: &SweepSpec, vocab_size: usize, seed: u64) -> Result<NetAb, EvalError> {
    let table = match &spec.embeddings {
        Some(t) => t.clone(),
        None => EmbeddingTable::random(vocab_size, spec.model.embed_dim, &mut Rng::new(seed).fork(EMBED_STREAM)),
    };
    Ok(init_model(spec.model.clone(), table, seed)?)
}

fn run_cell(spec: &SweepSpec, split: &Split, vocab_size: usize, rate: f64, seed: u64, method: Method) -> Result<SweepResult, EvalError> {
    let start = Instant::now();
    let noisy = corrupt_labels(&split.train, rate, &mut Rng::new(seed).fork(CORRUPT_STREAM))?;
    let model = initial_model(spec, vocab_size, seed)?;
    let config = TrainConfig { seed, ..spec.train.clone() };
    let val = (!split.validation.is_empty()).then_some(&split.validation);
    let outcome = train_with(method, model, &noisy, val, &config)?;
    let eval = evaluate(&outcome.model, &split.test)?;
    let wall_time = if spec.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
    Ok(SweepResult { noise_rate: rate, seed, method, accuracy: eval.accuracy, f1_pos: eval.f1_pos, f1_neg: eval.f1_neg, wall_time })
}

/// Trains every (rate, seed, method) cell on a corrupted copy of
/// `split.train` and evaluates on the untouched `split.test`.
///
/// Cells run on `spec.workers` threads; each owns its model, rngs and
/// optimizer state. The returned order is the cell order (rate, seed,
/// method) regardless of scheduling.
pub fn noise_sweep(split: &Split, vocab_size: usize, spec: &SweepSpec) -> Result<Vec<SweepResult>, EvalError> {
    spec.validate()?;
    let cells: Vec<(f64, u64, Method)> =
        spec.rates.iter().flat_map(|&r| spec.seeds.iter().flat_map(move |&s| spec.methods.iter().map(move |&m| (r, s, m)))).collect();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<SweepResult, EvalError>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..spec.workers.min(cells.len()) {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(rate, seed, method)) = cells.get(i) else { break };
                log::info!("sweep cell rate={rate} seed={seed} method={method}");
                let r = run_cell(spec, split, vocab_size, rate, seed, method)
                    .map_err(|e| EvalError::Cell { noise_rate: rate, seed, method, source: Box::new(e) });
                if r.is_err() {
                    stop.store(true, Ordering::SeqCst);
                }
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let slots = slots.into_inner().expect("no worker panicked");
    // the first failure in cell order wins so the report is schedule-independent
    let mut out = Vec::with_capacity(cells.len());
    for slot in slots {
        match slot {
            Some(Ok(r)) => out.push(r),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    Ok(out)
}
