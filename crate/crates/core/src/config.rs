//! Experiment configuration: a TOML file read as flat dotted keys
//! (`train.lr_init`), with `key=value` overrides applied on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Value;

use crate::data::PreprocessConfig;
use crate::ensemble::Aggregation;
use crate::model::ModelConfig;
use crate::objectives::LossConfig;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown configuration key {key:?}; valid keys are: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<String> },
    #[error("override {0:?} is not of the form key=value")]
    BadOverride(String),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelPreset {
    Tiny,
    Toy,
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: ModelPreset,
    pub input_size: usize,
    pub init_seed: u64,
    /// Empty for random initialisation.
    pub pretrained_path: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: ModelPreset::Toy,
            input_size: 224,
            init_seed: 42,
            pretrained_path: String::new(),
        }
    }
}

impl ModelSection {
    pub fn model_config(&self) -> ModelConfig {
        let mut c = match self.preset {
            ModelPreset::Tiny => ModelConfig::tiny(),
            ModelPreset::Toy => ModelConfig::toy(),
            ModelPreset::Reference => ModelConfig::reference(),
        };
        c.input_size = self.input_size;
        c.init_seed = self.init_seed;
        if !self.pretrained_path.is_empty() {
            c.pretrained_path = Some(PathBuf::from(&self.pretrained_path));
            c.cnn.pretrained = true;
            c.swin.pretrained = true;
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Folder-per-class dataset root.
    pub root: String,
    /// `train`/`val`/`test` fractions.
    pub split: [f64; 3],
    pub split_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            root: String::new(),
            split: [0.8, 0.1, 0.1],
            split_seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub batch_size: usize,
    pub bootstrap_iterations: usize,
    pub ci_level: f64,
    pub bootstrap_seed: u64,
    pub aggregation: Aggregation,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            batch_size: 8,
            bootstrap_iterations: 1000,
            ci_level: 0.95,
            bootstrap_seed: 0,
            aggregation: Aggregation::Probabilities,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    /// Target-domain dataset with `images/` and `masks/`.
    pub root: String,
    pub fractions: Vec<f64>,
    pub split_seed: u64,
    pub seeds: Vec<u64>,
    /// Source-domain Dice for the percent-of-source column; 0 disables it.
    pub source_reference: f64,
}

impl Default for AdaptSection {
    fn default() -> Self {
        AdaptSection {
            root: String::new(),
            fractions: vec![0.05, 0.10, 0.20, 0.50],
            split_seed: 42,
            seeds: vec![42],
            source_reference: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub preprocess: PreprocessConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub eval: EvalSection,
    pub adapt: AdaptSection,
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = toml::map::Map::new();
    for (key, v) in flat {
        let parts: Vec<&str> = key.split('.').collect();
        let mut t = &mut root;
        for p in &parts[..parts.len() - 1] {
            t = t
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(toml::map::Map::new()))
                .as_table_mut()
                .unwrap();
        }
        t.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Value::Table(root)
}

/// A bare override value is read as TOML, falling back to a string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

impl ExperimentConfig {
    /// Every settable key with its default.
    pub fn default_keys() -> BTreeMap<String, Value> {
        let v = Value::try_from(ExperimentConfig::default()).expect("defaults serialise");
        let mut out = BTreeMap::new();
        flatten("", &v, &mut out);
        out
    }

    fn check_keys<'a>(keys: impl IntoIterator<Item = &'a String>) -> Result<(), ConfigError> {
        let valid = Self::default_keys();
        let valid_prefixes: Vec<String> = valid.keys().cloned().collect();
        for k in keys {
            let known = valid.contains_key(k)
                || valid_prefixes
                    .iter()
                    .any(|v| v.starts_with(&format!("{k}.")));
            if !known && !k.starts_with("loss.class_weights") {
                return Err(ConfigError::UnknownKey {
                    key: k.clone(),
                    valid: valid_prefixes,
                });
            }
        }
        Ok(())
    }

    /// Parses TOML text and applies `key=value` overrides.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut user = BTreeMap::new();
        flatten("", &Value::Table(table), &mut user);
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            user.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        Self::check_keys(user.keys())?;
        if let Some(Value::Array(w)) = user.remove("loss.class_weights") {
            user.insert("loss.class_weights.fixed".into(), Value::Array(w));
        }
        let mut flat = Self::default_keys();
        for k in user.keys() {
            flat.retain(|d, _| {
                !(d.starts_with(&format!("{k}.")) || k.starts_with(&format!("{d}.")))
            });
        }
        flat.extend(user);
        let cfg: ExperimentConfig = unflatten(&flat)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.train.validate().map_err(|e| inv(&e))?;
        self.loss.validate().map_err(|e| inv(&e))?;
        self.preprocess.validate().map_err(|e| inv(&e))?;
        self.model.model_config().validate().map_err(|e| inv(&e))?;
        if self.preprocess.target_size != self.model.input_size {
            return Err(ConfigError::Invalid(format!(
                "preprocess.target_size {} differs from model.input_size {}",
                self.preprocess.target_size, self.model.input_size
            )));
        }
        if !(self.eval.ci_level > 0.0 && self.eval.ci_level < 1.0) || self.eval.batch_size == 0 {
            return Err(ConfigError::Invalid(
                "eval.ci_level must be in (0, 1) and eval.batch_size > 0".into(),
            ));
        }
        Ok(())
    }

    /// Flattened `key -> value` strings, for run manifests.
    pub fn flat(&self) -> BTreeMap<String, String> {
        let v = Value::try_from(self).expect("config serialises");
        let mut out = BTreeMap::new();
        flatten("", &v, &mut out);
        out.into_iter().map(|(k, v)| (k, v.to_string())).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
