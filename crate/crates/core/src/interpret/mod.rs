//! Attention-gate validation and Grad-CAM.

mod attention;
mod gradcam;
mod morphology;
mod otsu;

use thiserror::Error;

pub use attention::{
    attention_validation, attention_validation_pipeline, AttentionValidationResult,
};
pub use gradcam::{grad_cam, grad_cam_map, min_max_normalize, GradCamResult};
pub use morphology::{dilate, erode, morphological_open};
pub use otsu::{otsu_binarize, otsu_threshold, OtsuResult, OTSU_BINS};

use crate::metrics::MetricError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("empty map")]
    EmptyMap,
    #[error("class {class} outside 0..{classes}")]
    ClassIndex { class: usize, classes: usize },
    #[error("expected a single image, got shape {0:?}")]
    Shape(Vec<usize>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
