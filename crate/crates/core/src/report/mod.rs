//! Run manifests, metric reports, learning curves and figures.

mod compare;
mod curve;
mod figure;
mod manifest;
mod metrics_report;

use std::path::PathBuf;

use thiserror::Error;

pub use compare::{compare_reports, render_comparison, ComparisonRow, ComparisonTable};
pub use curve::{
    learning_curve_points, render_curve_plot, render_curve_tsv, LearningCurvePoint, MeanStd,
};
pub use figure::{panel_figure, PanelInputs, PANEL_COLUMNS};
pub use manifest::{dataset_fingerprint, RunManifest};
pub use metrics_report::{
    ClassRow, Comparison, MetricsReport, PerImage, SeedSummary, METRICS_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn write_file(
    path: &std::path::Path,
    contents: impl AsRef<[u8]>,
) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: serde::Serialize>(
    path: &std::path::Path,
    value: &T,
) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_file(path, text)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(
    path: &std::path::Path,
) -> Result<T, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}
