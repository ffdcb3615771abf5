//! Training and evaluation through the public API on the bundled toy corpus.

use netab::eval::{evaluate, noise_sweep, SweepSpec};
use netab::model::{Checkpoint, ModelConfig};
use netab::synth::toy_corpus;
use netab::text::{corrupt_labels, split_corpus, vocabulary_for, EmbeddingTable, LabeledCorpus, Split, Vocabulary, MAX_LEN};
use netab::training::{init_model, train, train_baseline_cnn, TrainConfig};
use netab::Rng;

fn toy() -> (Split, Vocabulary) {
    let records = toy_corpus();
    let vocab = vocabulary_for(&records);
    let corpus = LabeledCorpus::encode("toy", &records, &vocab, MAX_LEN);
    (split_corpus(&corpus, &mut Rng::new(3)).unwrap(), vocab)
}

fn small() -> ModelConfig {
    ModelConfig { embed_dim: 10, feature_maps: 5, windows: [3, 4, 5], max_len: MAX_LEN, classes: 2 }
}

fn config() -> TrainConfig {
    TrainConfig { total_epochs: 12, warmup_epochs: 3, batch_size: 8, lr: 0.01, ..TrainConfig::default() }
}

#[test]
fn trained_checkpoint_round_trips_with_identical_metrics() {
    let (split, vocab) = toy();
    let model = init_model(small(), EmbeddingTable::random(vocab.len(), 10, &mut Rng::new(1)), 1).unwrap();
    let out = train(model, &split.train, Some(&split.validation), &config()).unwrap();
    let before = evaluate(&out.model, &split.test).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint { model: out.model.clone(), vocabulary: vocab, metadata: serde_json::json!({"note": "t"}) }.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.model, out.model);
    assert_eq!(evaluate(&back.model, &split.test).unwrap(), before);
}

#[test]
fn both_methods_learn_the_toy_task_without_noise() {
    let (split, vocab) = toy();
    let fresh = || init_model(small(), EmbeddingTable::random(vocab.len(), 10, &mut Rng::new(2)), 2).unwrap();
    let netab = train(fresh(), &split.train, Some(&split.validation), &config()).unwrap();
    let cnn = train_baseline_cnn(fresh(), &split.train, Some(&split.validation), &config()).unwrap();
    assert!(evaluate(&netab.model, &split.train).unwrap().accuracy >= 0.9);
    assert!(evaluate(&cnn.model, &split.train).unwrap().accuracy >= 0.9);
}

#[test]
fn sweep_never_touches_clean_splits() {
    let (split, vocab) = toy();
    let copy = split.clone();
    let spec = SweepSpec::new(vec![0.5], vec![4], small(), TrainConfig { total_epochs: 2, warmup_epochs: 1, ..config() });
    let results = noise_sweep(&split, vocab.len(), &spec).unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(split, copy);
}

#[test]
fn corrupted_copy_leaves_source_alone() {
    let (split, _) = toy();
    let noisy = corrupt_labels(&split.train, 0.5, &mut Rng::new(9)).unwrap();
    assert_eq!(split.train.corrupted_count(), 0);
    assert_eq!(noisy.corrupted_count(), (0.5 * split.train.len() as f64).round() as usize);
}
