//! Self-describing binary checkpoints.
//!
//! Layout: 8-byte magic `NETABCKP`, `u32` LE format version, `u64` LE
//! header length, a JSON header (model config, vocabulary, free-form
//! metadata, parameter names/shapes, SHA-256 of the payload), then every
//! parameter value as `f64` LE in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelError, NetAb};
use crate::numeric::Tensor;
use crate::text::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NETABCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    vocabulary: Vec<String>,
    metadata: serde_json::Value,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

/// A model plus everything needed to apply it to raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: NetAb,
    pub vocabulary: Vocabulary,
    /// Training configuration or other run information.
    pub metadata: serde_json::Value,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let mut payload = Vec::with_capacity(self.model.params().iter().map(|p| p.len() * 8).sum());
        for p in self.model.params() {
            for v in p.values() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            model: self.model.config().clone(),
            vocabulary: self.vocabulary.tokens().to_vec(),
            metadata: self.metadata.clone(),
            tensors: self.model.named_params().map(|(n, t)| TensorEntry { name: n.to_string(), shape: t.shape().to_vec() }).collect(),
            payload_sha256: hex(&Sha256::digest(&payload)),
        };
        let header = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&payload)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let corrupt = |what: &str| ModelError::Checkpoint(what.to_string());
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if header_len > body.len() {
            return Err(corrupt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| ModelError::Checkpoint(format!("header: {e}")))?;
        if header.format_version != version {
            return Err(ModelError::CheckpointVersion { found: header.format_version, expected: CHECKPOINT_VERSION });
        }
        let payload = &body[header_len..];
        if hex(&Sha256::digest(payload)) != header.payload_sha256 {
            return Err(corrupt("payload checksum mismatch"));
        }
        let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if payload.len() != total * 8 {
            return Err(corrupt("payload length does not match tensor shapes"));
        }
        let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut named = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n = entry.shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            named.push((entry.name, Tensor::new(entry.shape, data)?));
        }
        let model = NetAb::from_parts(header.model, named)?;
        let vocabulary = Vocabulary::from_tokens(header.vocabulary).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if vocabulary.len() != model.vocab_size() {
            return Err(corrupt("vocabulary size does not match the embedding table"));
        }
        Ok(Self { model, vocabulary, metadata: header.metadata })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
