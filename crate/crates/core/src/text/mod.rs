//! Tokenization, vocabulary, word vectors, corpus IO, splitting and label
//! corruption.

mod corpus;
mod embeddings;
mod tokenize;
mod vocab;

use std::path::PathBuf;

pub use corpus::{
    corrupt_labels, flip_label, holdout_validation, load_corpus, parse_label, parse_records, read_records, split_corpus, vocabulary_for, CorpusFormat,
    LabeledCorpus, LabeledExample, Record, Split, MAX_LEN, MAX_NOISE_RATE, MIN_SPLIT_SIZE, NEGATIVE, NUM_CLASSES, POSITIVE,
};
pub use embeddings::{load_embeddings, EmbeddingTable, RANDOM_INIT_RANGE};
pub use tokenize::tokenize;
pub use vocab::{encode_sentence, Vocabulary, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN};

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(String),
    #[error("corpus has no data rows")]
    EmptyCorpus,
    #[error("corpus header lacks a `{0}` column")]
    MissingColumn(String),
    #[error("row {row}: missing text field")]
    MissingField { row: usize },
    #[error("row {row}: unknown label `{value}` (expected 0/1 or neg/pos)")]
    UnknownLabel { row: usize, value: String },
    #[error("embedding dimension mismatch: --embed-dim is {flag} but the file has {file} values per token")]
    EmbeddingDim { flag: usize, file: usize },
    #[error("embedding file line {line}: expected {expected} float values, found {found} (or an unparsable value)")]
    MalformedEmbedding { line: usize, expected: usize, found: usize },
    #[error("noise rate {0} outside [0, 0.5]; the noise rate must stay below one half for the given labels to remain majority-correct")]
    NoiseRate(f64),
    #[error("corpus of {n} examples is too small to split (need at least {min})")]
    TooSmall { n: usize, min: usize },
    #[error("vocabulary: {0}")]
    Vocabulary(String),
}

impl From<csv::Error> for TextError {
    fn from(e: csv::Error) -> Self {
        TextError::Csv(e.to_string())
    }
}
