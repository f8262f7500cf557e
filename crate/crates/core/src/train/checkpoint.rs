//! Binary checkpoint: magic, format version, a JSON header, then every
//! tensor's values as little-endian `f64` in header order.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;
use thiserror::Error;

use super::{EpochRecord, TrainConfig};
use crate::model::{Model, ModelConfig, ModelError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SNSGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated {
        offset: usize,
        needed: usize,
        len: usize,
    },
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint does not fit the model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub trainable: bool,
    pub value: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointBundle {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub seed: u64,
    /// Epoch whose parameters are stored; `None` for an untrained model.
    pub epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
    /// Parameters and normalisation buffers in store order.
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    trainable: bool,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: u64,
    epoch: Option<usize>,
    history: Vec<EpochRecord>,
    tensors: Vec<TensorMeta>,
}

impl CheckpointBundle {
    pub fn from_model(
        model: &Model,
        train_config: &TrainConfig,
        epoch: Option<usize>,
        history: Vec<EpochRecord>,
    ) -> Self {
        let ps = &model.params;
        CheckpointBundle {
            format_version: CHECKPOINT_VERSION,
            model_config: model.config.clone(),
            train_config: train_config.clone(),
            seed: train_config.seed,
            epoch,
            history,
            tensors: ps
                .ids()
                .map(|id| NamedTensor {
                    name: ps.name(id).to_string(),
                    trainable: ps.is_trainable(id),
                    value: ps.get(id).clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model and copies every stored tensor into it by name.
    pub fn to_model(&self) -> Result<Model, CheckpointError> {
        let mut model = Model::new(self.model_config.clone())?;
        self.load_into(&mut model)?;
        Ok(model)
    }

    pub fn load_into(&self, model: &mut Model) -> Result<(), CheckpointError> {
        if self.tensors.len() != model.params.len() {
            return Err(CheckpointError::Mismatch(format!(
                "{} stored tensors, model has {}",
                self.tensors.len(),
                model.params.len()
            )));
        }
        for t in &self.tensors {
            let id = model
                .params
                .find(&t.name)
                .ok_or_else(|| CheckpointError::Mismatch(format!("unknown tensor {}", t.name)))?;
            if model.params.get(id).shape() != t.value.shape() {
                return Err(CheckpointError::Mismatch(format!(
                    "{}: stored {:?}, model {:?}",
                    t.name,
                    t.value.shape(),
                    model.params.get(id).shape()
                )));
            }
            model.params.set(id, t.value.clone());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let header = Header {
            model_config: self.model_config.clone(),
            train_config: self.train_config.clone(),
            seed: self.seed,
            epoch: self.epoch,
            history: self.history.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorMeta {
                    name: t.name.clone(),
                    trainable: t.trainable,
                    shape: t.value.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let values: usize = self.tensors.iter().map(|t| t.value.numel()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * values);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in t.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for meta in header.tensors {
            let n: usize = meta.shape.iter().product();
            let raw = r.take(8 * n)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor {
                name: meta.name,
                trainable: meta.trainable,
                value: Tensor::new(&meta.shape, data),
            });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Mismatch(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(CheckpointBundle {
            format_version: version,
            model_config: header.model_config,
            train_config: header.train_config,
            seed: header.seed,
            epoch: header.epoch,
            history: header.history,
            tensors,
        })
    }
}

/// Builds a model and, for each backbone flagged `pretrained`, copies that
/// branch's tensors from the checkpoint at `config.pretrained_path`.
pub fn build_model(config: &ModelConfig) -> Result<Model, CheckpointError> {
    let mut model = Model::new(config.clone())?;
    let prefixes: Vec<&str> = [
        (config.cnn.pretrained, "cnn."),
        (config.swin.pretrained, "swin."),
    ]
    .into_iter()
    .filter_map(|(on, p)| on.then_some(p))
    .collect();
    if prefixes.is_empty() {
        return Ok(model);
    }
    let path = config
        .pretrained_path
        .as_deref()
        .ok_or_else(|| CheckpointError::Mismatch("no pretrained_path".into()))?;
    let source = load_checkpoint(path)?;
    for prefix in prefixes {
        let mut copied = 0;
        for t in source.tensors.iter().filter(|t| t.name.starts_with(prefix)) {
            let id = model
                .params
                .find(&t.name)
                .ok_or_else(|| CheckpointError::Mismatch(format!("unknown tensor {}", t.name)))?;
            if model.params.get(id).shape() != t.value.shape() {
                return Err(CheckpointError::Mismatch(format!(
                    "{}: shape {:?} in {}",
                    t.name,
                    t.value.shape(),
                    path.display()
                )));
            }
            model.params.set(id, t.value.clone());
            copied += 1;
        }
        if copied == 0 {
            return Err(CheckpointError::Mismatch(format!(
                "{} holds no {prefix}* tensors",
                path.display()
            )));
        }
    }
    Ok(model)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let len = self.bytes.len();
        if len - self.pos < n {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                len,
            });
        }
        self.pos += n;
        Ok(&self.bytes[self.pos - n..self.pos])
    }
}

pub fn save_checkpoint(bundle: &CheckpointBundle, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = bundle.to_bytes()?;
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointBundle, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    CheckpointBundle::from_bytes(&bytes)
}
