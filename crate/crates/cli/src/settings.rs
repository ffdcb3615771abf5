//! Resolved hyperparameters: defaults, then a key=value file, then flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use netab::model::ModelConfig;
use netab::text::{MAX_LEN, NUM_CLASSES};
use netab::training::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const WINDOWS: [usize; 3] = [3, 4, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub embed_dim: usize,
    pub feature_maps: usize,
    pub max_len: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self { train: TrainConfig::default(), embed_dim: 300, feature_maps: 100, max_len: MAX_LEN }
    }
}

impl Settings {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { embed_dim: self.embed_dim, feature_maps: self.feature_maps, windows: WINDOWS, max_len: self.max_len, classes: NUM_CLASSES }
    }

    pub fn keys() -> Vec<String> {
        match serde_json::to_value(Settings::default()).expect("settings serialize") {
            Value::Object(m) => m.keys().cloned().collect(),
            _ => unreachable!("settings serialize to an object"),
        }
    }

    /// Applies `key=value` overrides in order; later ones win.
    pub fn with_overrides<'a, I>(&self, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, String)>,
    {
        let Value::Object(mut map) = serde_json::to_value(self)? else { unreachable!("settings serialize to an object") };
        for (key, raw) in overrides {
            set(&mut map, key, &raw)?;
        }
        let out: Settings = serde_json::from_value(Value::Object(map))?;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model_config().validate()?;
        Ok(())
    }
}

fn set(map: &mut Map<String, Value>, key: &str, raw: &str) -> Result<()> {
    let raw = raw.trim();
    let Some(current) = map.get(key) else {
        bail!("unknown setting `{key}` (known: {})", Settings::keys().join(", "));
    };
    let bad = || format!("setting `{key}`: cannot parse `{raw}`");
    let value = match current {
        Value::Bool(_) => Value::Bool(raw.parse().with_context(bad)?),
        Value::String(_) => Value::String(raw.to_string()),
        Value::Number(n) if n.is_u64() => Value::from(raw.parse::<u64>().with_context(bad)?),
        Value::Number(_) | Value::Null => {
            if current.is_null() && (raw.is_empty() || raw.eq_ignore_ascii_case("none")) {
                Value::Null
            } else {
                Value::from(raw.parse::<f64>().with_context(bad)?)
            }
        }
        _ => bail!("setting `{key}` cannot be set from text"),
    };
    map.insert(key.to_string(), value);
    Ok(())
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", n + 1);
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Defaults, then `file`, then `flags`.
pub fn resolve(file: Option<&Path>, flags: &[(&'static str, String)]) -> Result<Settings> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        pairs = parse_config_file(&text).with_context(|| format!("config {}", path.display()))?;
    }
    pairs.extend(flags.iter().map(|(k, v)| (k.to_string(), v.clone())));
    Settings::default().with_overrides(pairs.iter().map(|(k, v)| (k.as_str(), v.clone())))
}
