//! Run manifests: everything needed to repeat a command exactly.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use netab::training::Method;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::settings::Settings;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub train: PathBuf,
    pub test: PathBuf,
    pub val: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub method: Method,
    pub noise_rate: f64,
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub corpus: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub split_seed: u64,
    pub workers: usize,
    pub record_wall_time: bool,
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptRun {
    pub input: PathBuf,
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunSpec {
    Train(TrainRun),
    Sweep(SweepRun),
    Corrupt(CorruptRun),
}

impl RunSpec {
    /// Input files with the role each plays.
    pub fn inputs(&self) -> Vec<(&'static str, &Path)> {
        let mut out = Vec::new();
        match self {
            RunSpec::Train(t) => {
                out.push(("train", t.train.as_path()));
                out.push(("test", t.test.as_path()));
                if let Some(v) = &t.val {
                    out.push(("val", v.as_path()));
                }
                if let Some(e) = &t.embeddings {
                    out.push(("embeddings", e.as_path()));
                }
            }
            RunSpec::Sweep(s) => {
                for (role, p) in [("corpus", &s.corpus), ("train", &s.train), ("test", &s.test), ("embeddings", &s.embeddings)] {
                    if let Some(p) = p {
                        out.push((role, p.as_path()));
                    }
                }
            }
            RunSpec::Corrupt(c) => out.push(("input", c.input.as_path())),
        }
        out
    }

    pub fn seed(&self) -> u64 {
        match self {
            RunSpec::Train(t) => t.settings.train.seed,
            RunSpec::Sweep(s) => s.split_seed,
            RunSpec::Corrupt(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub started_at: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub run: RunSpec,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Absolute form of `path`; inputs must exist.
pub fn absolute(path: &Path) -> Result<PathBuf> {
    path.canonicalize().with_context(|| format!("cannot open {}", path.display()))
}

impl RunManifest {
    pub fn new(run: RunSpec) -> Result<Self> {
        let inputs = run
            .inputs()
            .into_iter()
            .map(|(role, p)| Ok(InputDigest { role: role.to_string(), path: p.to_path_buf(), sha256: sha256_file(p)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            seed: run.seed(),
            inputs,
            run,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("cannot write manifest {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))
    }

    /// Fails if any input changed since the manifest was written.
    pub fn verify_inputs(&self) -> Result<()> {
        for input in &self.inputs {
            let now = sha256_file(&input.path)?;
            if now != input.sha256 {
                bail!("{} input {} changed since the run (sha256 {} now {})", input.role, input.path.display(), input.sha256, now);
            }
        }
        Ok(())
    }
}
