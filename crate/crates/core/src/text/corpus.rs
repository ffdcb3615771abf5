use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::vocab::{encode_sentence, Vocabulary};
use super::TextError;
use crate::numeric::Rng;

/// Padded sentence length.
pub const MAX_LEN: usize = 40;
pub const NUM_CLASSES: usize = 2;
pub const NEGATIVE: usize = 0;
pub const POSITIVE: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub ids: Vec<usize>,
    /// Label used for training, possibly corrupted.
    pub label: usize,
    pub original_label: usize,
    pub corrupted: bool,
    pub text: String,
}

impl LabeledExample {
    pub fn new(ids: Vec<usize>, label: usize, text: impl Into<String>) -> Self {
        Self { ids, label, original_label: label, corrupted: false, text: text.into() }
    }

    fn set_label(&mut self, label: usize) {
        self.label = label;
        self.corrupted = label != self.original_label;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub name: String,
    pub classes: usize,
    pub examples: Vec<LabeledExample>,
}

impl LabeledCorpus {
    pub fn new(name: impl Into<String>, examples: Vec<LabeledExample>) -> Self {
        Self { name: name.into(), classes: NUM_CLASSES, examples }
    }

    /// Tokenizes and encodes raw records against `vocab`.
    pub fn encode(name: impl Into<String>, records: &[Record], vocab: &Vocabulary, max_len: usize) -> Self {
        let examples = records
            .iter()
            .map(|r| LabeledExample::new(encode_sentence(&tokenize(&r.text), vocab, max_len), r.label, r.text.clone()))
            .collect();
        Self::new(name, examples)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn corrupted_count(&self) -> usize {
        self.examples.iter().filter(|e| e.corrupted).count()
    }

    /// Label counts indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    /// Writes `label,text` (plus `corrupted` when asked) as RFC-4180 CSV.
    pub fn write_csv<W: Write>(&self, writer: W, with_corrupted: bool) -> Result<(), TextError> {
        let mut w = csv::Writer::from_writer(writer);
        if with_corrupted {
            w.write_record(["label", "text", "corrupted"])?;
        } else {
            w.write_record(["label", "text"])?;
        }
        for e in &self.examples {
            let label = e.label.to_string();
            if with_corrupted {
                w.write_record([label.as_str(), e.text.as_str(), if e.corrupted { "true" } else { "false" }])?;
            } else {
                w.write_record([label.as_str(), e.text.as_str()])?;
            }
        }
        w.flush().map_err(|e| TextError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// One parsed corpus row before encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub label: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    Csv,
    Tsv,
    /// TSV for `.tsv`/`.tab` files, CSV otherwise.
    #[default]
    Auto,
}

impl CorpusFormat {
    fn delimiter(self, path: &Path) -> u8 {
        match self {
            Self::Csv => b',',
            Self::Tsv => b'\t',
            Self::Auto => match path.extension().and_then(|e| e.to_str()) {
                Some("tsv") | Some("tab") => b'\t',
                _ => b',',
            },
        }
    }
}

pub fn parse_label(raw: &str) -> Option<usize> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "0" | "neg" | "negative" => Some(NEGATIVE),
        "1" | "pos" | "positive" => Some(POSITIVE),
        _ => None,
    }
}

/// Reads a delimited file with a `label,text` header. File order is kept.
pub fn read_records(path: &Path, format: CorpusFormat) -> Result<Vec<Record>, TextError> {
    let file = std::fs::File::open(path).map_err(|source| TextError::Io { path: path.to_path_buf(), source })?;
    parse_records(file, format.delimiter(path))
}

pub fn parse_records<R: Read>(reader: R, delimiter: u8) -> Result<Vec<Record>, TextError> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(TextError::EmptyCorpus);
    }
    let column = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name)).ok_or_else(|| TextError::MissingColumn(name.to_string()));
    let (label_col, text_col) = (column("label")?, column("text")?);

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let raw = row.get(label_col).unwrap_or_default();
        let label = parse_label(raw).ok_or_else(|| TextError::UnknownLabel { row: row_no, value: raw.to_string() })?;
        let text = row.get(text_col).ok_or(TextError::MissingField { row: row_no })?.to_string();
        records.push(Record { label, text });
    }
    if records.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    Ok(records)
}

/// Reads, tokenizes and encodes a corpus file against `vocab`.
pub fn load_corpus(path: &Path, format: CorpusFormat, vocab: &Vocabulary, max_len: usize) -> Result<LabeledCorpus, TextError> {
    let records = read_records(path, format)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    Ok(LabeledCorpus::encode(name, &records, vocab, max_len))
}

/// Builds a vocabulary over the tokenized texts of `records`.
pub fn vocabulary_for<'a, I>(records: I) -> Vocabulary
where
    I: IntoIterator<Item = &'a Record>,
{
    let sentences: Vec<Vec<String>> = records.into_iter().map(|r| tokenize(&r.text)).collect();
    Vocabulary::build(sentences.iter(), 1)
}

/// Largest noise rate accepted by [`corrupt_labels`]; beyond it the given
/// labels are no longer majority-correct.
pub const MAX_NOISE_RATE: f64 = 0.5;

/// Flips the labels of exactly `round(noise_rate · n)` examples chosen
/// uniformly without replacement. The input is not modified.
pub fn corrupt_labels(corpus: &LabeledCorpus, noise_rate: f64, rng: &mut Rng) -> Result<LabeledCorpus, TextError> {
    if !(0.0..=MAX_NOISE_RATE).contains(&noise_rate) {
        return Err(TextError::NoiseRate(noise_rate));
    }
    let mut out = corpus.clone();
    let flips = (noise_rate * corpus.len() as f64).round() as usize;
    for i in rng.sample_indices(corpus.len(), flips) {
        let e = &mut out.examples[i];
        e.set_label(flip_label(e.label, corpus.classes));
    }
    Ok(out)
}

/// The other class of a binary label.
pub fn flip_label(label: usize, classes: usize) -> usize {
    debug_assert_eq!(classes, 2, "label flipping is defined for binary labels");
    1 - label
}

/// Train / validation / test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: LabeledCorpus,
    pub validation: LabeledCorpus,
    pub test: LabeledCorpus,
}

pub const MIN_SPLIT_SIZE: usize = 10;

/// Shuffles, keeps 80% for training, and divides the remaining 20% into
/// validation (10% of it, at least one example) and test.
pub fn split_corpus(corpus: &LabeledCorpus, rng: &mut Rng) -> Result<Split, TextError> {
    let n = corpus.len();
    if n < MIN_SPLIT_SIZE {
        return Err(TextError::TooSmall { n, min: MIN_SPLIT_SIZE });
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_train = (0.8 * n as f64).round() as usize;
    let rest = n - n_train;
    let n_val = ((0.1 * rest as f64).round() as usize).max(1);
    let pick = |idx: &[usize], suffix: &str| {
        LabeledCorpus {
            name: format!("{}/{suffix}", corpus.name),
            classes: corpus.classes,
            examples: idx.iter().map(|&i| corpus.examples[i].clone()).collect(),
        }
    };
    Ok(Split {
        train: pick(&order[..n_train], "train"),
        validation: pick(&order[n_train..n_train + n_val], "validation"),
        test: pick(&order[n_train + n_val..], "test"),
    })
}

/// Moves a shuffled 10% (at least one example) of `test` into a
/// validation set. Returns `(validation, test)`.
pub fn holdout_validation(test: &LabeledCorpus, rng: &mut Rng) -> Result<(LabeledCorpus, LabeledCorpus), TextError> {
    let n = test.len();
    if n < 2 {
        return Err(TextError::TooSmall { n, min: 2 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_val = ((0.1 * n as f64).round() as usize).max(1);
    let pick = |idx: &[usize], name: String| LabeledCorpus { name, classes: test.classes, examples: idx.iter().map(|&i| test.examples[i].clone()).collect() };
    Ok((pick(&order[..n_val], format!("{}/validation", test.name)), pick(&order[n_val..], test.name.clone())))
}
