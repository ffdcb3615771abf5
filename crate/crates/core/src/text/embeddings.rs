use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::vocab::{Vocabulary, PAD_ID};
use super::TextError;
use crate::numeric::{Rng, Tensor};

/// Half-width of the uniform range for rows without a pretrained vector.
pub const RANDOM_INIT_RANGE: f64 = 0.25;

/// `|V|×d` word vectors plus a per-row flag recording whether the row came
/// from a pretrained file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Tensor,
    pub pretrained: Vec<bool>,
}

impl EmbeddingTable {
    /// Every row uniform in `[−0.25, 0.25]` except the zero pad row.
    pub fn random(vocab_size: usize, dim: usize, rng: &mut Rng) -> Self {
        let mut values: Vec<f64> = (0..vocab_size * dim).map(|_| rng.uniform(-RANDOM_INIT_RANGE, RANDOM_INIT_RANGE)).collect();
        values[PAD_ID * dim..(PAD_ID + 1) * dim].iter_mut().for_each(|v| *v = 0.0);
        Self {
            weights: Tensor::new(vec![vocab_size, dim], values).expect("shape matches"),
            pretrained: vec![false; vocab_size],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.weights.row(id)
    }

    pub fn pretrained_count(&self) -> usize {
        self.pretrained.iter().filter(|&&p| p).count()
    }
}

/// Reads vectors in GloVe text format (`token v1 … vd` per line) for the
/// tokens of `vocab`. Rows for tokens absent from the file keep the seeded
/// random initialization of [`EmbeddingTable::random`].
pub fn load_embeddings(path: &Path, vocab: &Vocabulary, dim: usize, rng: &mut Rng) -> Result<EmbeddingTable, TextError> {
    let file = File::open(path).map_err(|source| TextError::Io { path: path.to_path_buf(), source })?;
    let mut table = EmbeddingTable::random(vocab.len(), dim, rng);
    let reader = BufReader::new(file);
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|source| TextError::Io { path: path.to_path_buf(), source })?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default();
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            if line_no == 1 {
                return Err(TextError::EmbeddingDim { flag: dim, file: values.len() });
            }
            return Err(TextError::MalformedEmbedding { line: line_no, expected: dim, found: values.len() });
        }
        let Some(id) = vocab.get(token) else { continue };
        if id == PAD_ID {
            continue;
        }
        let row = &mut table.weights.values_mut()[id * dim..(id + 1) * dim];
        for (slot, raw) in row.iter_mut().zip(&values) {
            *slot = raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or(TextError::MalformedEmbedding {
                line: line_no,
                expected: dim,
                found: values.len(),
            })?;
        }
        table.pretrained[id] = true;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(["<pad>", "<unk>", "good", "bad", "meh"].map(String::from).to_vec()).unwrap()
    }

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn copies_present_rows_and_seeds_missing() {
        let f = file("good 0.5 -1 2\nother 1 1 1\nbad 0 0.125 3e-2\n");
        let v = vocab();
        let t = load_embeddings(f.path(), &v, 3, &mut Rng::new(8)).unwrap();
        assert_eq!(t.row(2), &[0.5, -1.0, 2.0]);
        assert_eq!(t.row(3), &[0.0, 0.125, 0.03]);
        assert_eq!(t.row(0), &[0.0; 3]);
        assert!(t.row(4).iter().all(|v| (-0.25..=0.25).contains(v)));
        assert_eq!(t.pretrained, vec![false, false, true, true, false]);

        let again = load_embeddings(f.path(), &v, 3, &mut Rng::new(8)).unwrap();
        assert_eq!(t, again);
        let other = load_embeddings(f.path(), &v, 3, &mut Rng::new(9)).unwrap();
        assert_ne!(t.row(4), other.row(4));
    }

    #[test]
    fn dim_mismatch_names_both() {
        let f = file("good 0.5 -1 2 4\n");
        let err = load_embeddings(f.path(), &vocab(), 3, &mut Rng::new(0)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('4'), "{msg}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = file("good 0.5 -1 2\nbad 1 2\n");
        let err = load_embeddings(f.path(), &vocab(), 3, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, TextError::MalformedEmbedding { line: 2, .. }), "{err}");
        let f = file("good 0.5 -1 2\nbad 1 x 2\n");
        let err = load_embeddings(f.path(), &vocab(), 3, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, TextError::MalformedEmbedding { line: 2, .. }), "{err}");
    }

    #[test]
    fn unreadable_file() {
        let err = load_embeddings(Path::new("/nonexistent/glove.txt"), &vocab(), 3, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, TextError::Io { .. }));
    }
}
