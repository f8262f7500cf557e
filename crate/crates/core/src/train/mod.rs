//! Training protocol, checkpoints and fine-tuning.

mod checkpoint;
mod dataset;
mod early_stop;
mod fine_tune;
mod optim;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{
    build_model, load_checkpoint, save_checkpoint, CheckpointBundle, CheckpointError, NamedTensor,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use dataset::{
    access_log, evaluate, evaluate_with, Batch, Dataset, Evaluation, Origin, Sample,
};
pub use early_stop::{EarlyStopState, StopDecision};
pub use fine_tune::{adaptation_curve, fine_tune, CurvePoint};
pub use optim::{clip_gradients, cosine_lr, global_norm, AdamW, AdamWConfig};
pub use trainer::{train, train_with, StepReport, TrainOutcome, Trainer};

use crate::data::{AugmentationConfig, DataError};
use crate::metrics::MetricError;
use crate::model::ModelError;
use crate::objectives::LossError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("test-split records passed to training")]
    TestSplitAccess,
    #[error("non-finite loss at epoch {epoch}, batch {batch} (samples {ids:?})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        ids: Vec<String>,
    },
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    High,
    /// Parameters and inputs are rounded to single precision after every
    /// update, emulating a half-width arithmetic run.
    Reduced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub batch_size: usize,
    pub precision: Precision,
    pub seed: u64,
    pub augmentation: AugmentationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            patience: 10,
            lr_init: 1e-5,
            lr_min: 0.0,
            weight_decay: 1e-4,
            grad_clip_norm: 0.5,
            batch_size: 8,
            precision: Precision::High,
            seed: 42,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return bad("epochs, patience and batch_size must be positive");
        }
        if self.patience > self.epochs {
            return bad("patience must not exceed epochs");
        }
        if !(self.lr_init > 0.0) || !(self.lr_min >= 0.0) || self.lr_min > self.lr_init {
            return bad("need 0 <= lr_min <= lr_init and lr_init > 0");
        }
        if !(self.weight_decay >= 0.0) || !(self.grad_clip_norm > 0.0) {
            return bad("weight_decay must be >= 0 and grad_clip_norm > 0");
        }
        self.augmentation.validate()?;
        Ok(())
    }
}

/// One line of the epoch-history log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_seg_loss: f64,
    pub train_cls_loss: f64,
    /// Mean global gradient norm before clipping.
    pub grad_norm: f64,
    pub val_dice: Option<f64>,
    pub improved: bool,
}
