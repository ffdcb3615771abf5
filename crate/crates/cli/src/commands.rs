use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use netab::eval::{evaluate, format_results, noise_sweep, sig6, summarize, Evaluation, ResultFormat, SweepSpec, CORRUPT_STREAM, EMBED_STREAM};
use netab::model::Checkpoint;
use netab::synth::{synthetic_corpus, toy_corpus, SynthConfig};
use netab::text::{
    corrupt_labels, holdout_validation, load_embeddings, read_records, split_corpus, vocabulary_for, CorpusFormat, EmbeddingTable,
    LabeledCorpus, Record, Split, Vocabulary, MAX_NOISE_RATE,
};
use netab::training::{init_model, train_with, Method};
use netab::Rng;
use serde_json::json;

use crate::manifest::{absolute, CorruptRun, RunManifest, RunSpec, SweepRun, TrainRun, MANIFEST_FILE};

/// Rng stream that picks the validation holdout from a test file.
pub const SPLIT_STREAM: u64 = 6;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_CSV: &str = "history.csv";
pub const HISTORY_JSON: &str = "history.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=MAX_NOISE_RATE).contains(&rate) {
        return Err(netab::text::TextError::NoiseRate(rate).into());
    }
    Ok(())
}

fn records(path: &Path) -> Result<Vec<Record>> {
    read_records(path, CorpusFormat::Auto).with_context(|| format!("corpus {}", path.display()))
}

fn encode(name: &Path, recs: &[Record], vocab: &Vocabulary, max_len: usize) -> LabeledCorpus {
    LabeledCorpus::encode(name.display().to_string(), recs, vocab, max_len)
}

fn embeddings(path: Option<&Path>, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = Rng::new(seed).fork(EMBED_STREAM);
    match path {
        Some(p) => {
            let table = load_embeddings(p, vocab, dim, &mut rng).with_context(|| format!("embeddings {}", p.display()))?;
            log::info!("{} of {} vocabulary rows found in {}", table.pretrained_count(), vocab.len(), p.display());
            Ok(table)
        }
        None => Ok(EmbeddingTable::random(vocab.len(), dim, &mut rng)),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

fn metrics_json(e: &Evaluation) -> serde_json::Value {
    json!({
        "accuracy": e.accuracy,
        "f1_pos": e.f1_pos,
        "f1_neg": e.f1_neg,
        "f1_pos_undefined": e.f1_pos_undefined,
        "f1_neg_undefined": e.f1_neg_undefined,
        "test_examples": e.counts.total(),
    })
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))
}

pub fn run_train(run: &TrainRun, out: &Path) -> Result<()> {
    check_rate(run.noise_rate)?;
    run.settings.validate()?;
    prepare_out(out)?;
    RunManifest::new(RunSpec::Train(run.clone()))?.write(&out.join(MANIFEST_FILE))?;

    let seed = run.settings.train.seed;
    let max_len = run.settings.max_len;
    let train_recs = records(&run.train)?;
    let test_recs = records(&run.test)?;
    let val_recs = run.val.as_deref().map(records).transpose()?;
    let vocab = vocabulary_for(train_recs.iter().chain(test_recs.iter()).chain(val_recs.iter().flatten()));
    let train = encode(&run.train, &train_recs, &vocab, max_len);
    let test = encode(&run.test, &test_recs, &vocab, max_len);
    let (val, test) = match (&run.val, &val_recs) {
        (Some(p), Some(r)) => (encode(p, r, &vocab, max_len), test),
        _ => holdout_validation(&test, &mut Rng::new(seed).fork(SPLIT_STREAM))?,
    };
    let noisy = corrupt_labels(&train, run.noise_rate, &mut Rng::new(seed).fork(CORRUPT_STREAM))?;
    log::info!("{} training examples ({} flipped), {} validation, {} test, vocabulary {}", noisy.len(), noisy.corrupted_count(), val.len(), test.len(), vocab.len());

    let table = embeddings(run.embeddings.as_deref(), &vocab, run.settings.embed_dim, seed)?;
    let model = init_model(run.settings.model_config(), table, seed)?;
    let outcome = train_with(run.method, model, &noisy, Some(&val), &run.settings.train)?;
    let eval = evaluate(&outcome.model, &test)?;

    let metadata = json!({ "method": run.method, "noise_rate": run.noise_rate, "best_epoch": outcome.best_epoch, "settings": run.settings });
    Checkpoint { model: outcome.model, vocabulary: vocab, metadata }.save(&out.join(CHECKPOINT_FILE))?;
    write_file(&out.join(HISTORY_CSV), outcome.history.to_csv_string())?;
    write_file(&out.join(HISTORY_JSON), outcome.history.to_json() + "\n")?;

    let mut line = metrics_json(&eval);
    line["method"] = json!(run.method);
    line["noise_rate"] = json!(run.noise_rate);
    line["best_epoch"] = json!(outcome.best_epoch);
    write_file(&out.join(METRICS_FILE), serde_json::to_string_pretty(&line)? + "\n")?;
    print_json(&line)
}

fn sweep_split(run: &SweepRun) -> Result<(Split, Vocabulary)> {
    let max_len = run.settings.max_len;
    let mut rng = Rng::new(run.split_seed);
    match (&run.corpus, &run.train, &run.test) {
        (Some(c), None, None) => {
            let recs = records(c)?;
            let vocab = vocabulary_for(recs.iter());
            let split = split_corpus(&encode(c, &recs, &vocab, max_len), &mut rng)?;
            Ok((split, vocab))
        }
        (None, Some(tr), Some(te)) => {
            let (a, b) = (records(tr)?, records(te)?);
            let vocab = vocabulary_for(a.iter().chain(b.iter()));
            let (validation, test) = holdout_validation(&encode(te, &b, &vocab, max_len), &mut rng.fork(SPLIT_STREAM))?;
            Ok((Split { train: encode(tr, &a, &vocab, max_len), validation, test }, vocab))
        }
        _ => bail!("give either --corpus, or both --train and --test"),
    }
}

pub fn run_sweep(run: &SweepRun, out: &Path) -> Result<()> {
    for &r in &run.rates {
        check_rate(r)?;
    }
    run.settings.validate()?;
    prepare_out(out)?;
    RunManifest::new(RunSpec::Sweep(run.clone()))?.write(&out.join(MANIFEST_FILE))?;

    let (split, vocab) = sweep_split(run)?;
    let mut spec = SweepSpec::new(run.rates.clone(), run.seeds.clone(), run.settings.model_config(), run.settings.train.clone());
    spec.methods = run.methods.clone();
    spec.workers = run.workers;
    spec.record_wall_time = run.record_wall_time;
    if let Some(p) = &run.embeddings {
        spec.embeddings = Some(embeddings(Some(p), &vocab, run.settings.embed_dim, run.split_seed)?);
    }
    log::info!("sweep: {} train / {} validation / {} test examples, {} cells on {} workers", split.train.len(), split.validation.len(), split.test.len(), run.rates.len() * run.seeds.len() * run.methods.len(), run.workers);
    let results = noise_sweep(&split, vocab.len(), &spec)?;
    write_file(&out.join(RESULTS_CSV), format_results(&results, ResultFormat::Csv))?;
    write_file(&out.join(RESULTS_JSON), format_results(&results, ResultFormat::Json))?;

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:>10}  {:<6}  {:>4}  {:>13}  {:>12}", "noise_rate", "method", "runs", "mean_accuracy", "std_accuracy")?;
    for row in summarize(&results) {
        writeln!(stdout, "{:>10}  {:<6}  {:>4}  {:>13}  {:>12}", sig6(row.noise_rate), row.method, row.runs, sig6(row.mean_accuracy), sig6(row.std_accuracy))?;
    }
    Ok(())
}

pub fn run_evaluate(checkpoint: &Path, test: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("checkpoint {}", checkpoint.display()))?;
    let recs = records(test)?;
    let corpus = encode(test, &recs, &ck.vocabulary, ck.model.config().max_len);
    let eval = evaluate(&ck.model, &corpus)?;
    print_json(&metrics_json(&eval))
}

pub fn corrupt_manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn run_corrupt(run: &CorruptRun, output: &Path) -> Result<()> {
    check_rate(run.rate)?;
    let recs = records(&run.input)?;
    let vocab = vocabulary_for(recs.iter());
    let corpus = encode(&run.input, &recs, &vocab, 1);
    let noisy = corrupt_labels(&corpus, run.rate, &mut Rng::new(run.seed))?;
    let file = std::fs::File::create(output).with_context(|| format!("cannot write {}", output.display()))?;
    noisy.write_csv(std::io::BufWriter::new(file), true)?;
    RunManifest::new(RunSpec::Corrupt(run.clone()))?.write(&corrupt_manifest_path(output))?;
    print_json(&json!({ "flipped": noisy.corrupted_count(), "examples": noisy.len(), "rate": run.rate }))
}

/// Re-runs a recorded command. `out` defaults to where the original wrote.
pub fn run_replay(manifest_path: &Path, out: Option<&Path>) -> Result<()> {
    let manifest = RunManifest::read(manifest_path)?;
    manifest.verify_inputs()?;
    let here = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    match &manifest.run {
        RunSpec::Train(t) => run_train(t, out.unwrap_or(&here)),
        RunSpec::Sweep(s) => run_sweep(s, out.unwrap_or(&here)),
        RunSpec::Corrupt(c) => {
            let default = manifest_path.to_string_lossy().strip_suffix(".manifest.json").map(PathBuf::from);
            let target = match (out, default) {
                (Some(o), _) => o.to_path_buf(),
                (None, Some(d)) => d,
                (None, None) => bail!("give --out; the manifest name does not reveal the original output"),
            };
            run_corrupt(c, &target)
        }
    }
}

pub fn run_synth(out: &Path, toy: bool, config: &SynthConfig, seed: u64) -> Result<()> {
    let recs = if toy { toy_corpus() } else { synthetic_corpus(config, &mut Rng::new(seed)) };
    let vocab = vocabulary_for(recs.iter());
    let corpus = LabeledCorpus::encode("synth", &recs, &vocab, 1);
    let file = std::fs::File::create(out).with_context(|| format!("cannot write {}", out.display()))?;
    corpus.write_csv(std::io::BufWriter::new(file), false)?;
    print_json(&json!({ "examples": corpus.len(), "path": out }))
}

pub fn absolute_opt(p: Option<&Path>) -> Result<Option<PathBuf>> {
    p.map(absolute).transpose()
}

pub fn default_methods() -> Vec<Method> {
    vec![Method::Netab, Method::Cnn]
}
