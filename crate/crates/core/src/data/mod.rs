//! Dataset ingestion, splitting, preprocessing and augmentation.
//!
//! Images are held channel-first (`[3, H, W]`) with intensities in `[0, 1]`
//! after loading; masks are [`BinaryMask`]s whose values are exactly 0 or 1
//! at every stage.

mod augment;
mod image_ops;
mod io;
mod mask;
mod rgb;
mod split;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;
use thiserror::Error;

pub use augment::{augment_sample, sample_rng, AugmentationConfig};
pub use image_ops::{normalize_image, resize_image, resize_mask, Interpolation};
pub use io::{load_busi_manifest, load_external_manifest, read_manifest, write_manifest};
pub use mask::BinaryMask;
pub use rgb::{convert_rgb_mask, RgbMaskLabel, DEFAULT_BLACK_THRESHOLD};
pub use split::{
    largest_remainder, make_adaptation_splits, stratified_split, AdaptationSplit,
    AdaptationSplitSpec,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing mask for non-normal image {0}")]
    MissingMask(PathBuf),
    #[error("cannot read image {path}: {reason}")]
    UnreadableImage { path: PathBuf, reason: String },
    #[error("mask {mask} is {mask_size:?} but image is {image_size:?}")]
    MaskShape {
        mask: PathBuf,
        mask_size: (usize, usize),
        image_size: (usize, usize),
    },
    #[error(
        "ambiguous annotation: mask has both red ({red} px) and green ({green} px) foreground"
    )]
    AmbiguousAnnotation { red: usize, green: usize },
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("class {label} has {count} records but {needed} splits need at least one each")]
    ClassTooSmall {
        label: Label,
        count: usize,
        needed: usize,
    },
    #[error("degenerate image of size {0}x{1}")]
    Degenerate(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("manifest parse error at line {line}: {reason}")]
    ManifestFormat { line: usize, reason: String },
    #[error("unknown record id {0}")]
    UnknownId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Diagnostic class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Benign,
    Malignant,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Normal, Label::Benign, Label::Malignant];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Benign => "benign",
            Label::Malignant => "malignant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Label::Normal),
            "benign" => Ok(Label::Benign),
            "malignant" => Ok(Label::Malignant),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Busi,
    External,
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "busi" => Ok(Source::Busi),
            "external" => Ok(Source::External),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Busi => "busi",
            Source::External => "external",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Where a record lives on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to [`DatasetManifest::root`].
    pub image_path: PathBuf,
    pub mask_paths: Vec<PathBuf>,
    pub label: Label,
    pub source: Source,
}

/// A loaded sample.
#[derive(Clone, Debug)]
pub struct ImageRecord {
    pub id: String,
    /// `[3, H, W]`, values in `[0, 1]`.
    pub image: Tensor,
    pub mask: BinaryMask,
    pub label: Label,
    pub source: Source,
}

impl ImageRecord {
    pub fn new(
        id: impl Into<String>,
        image: Tensor,
        mask: BinaryMask,
        label: Label,
        source: Source,
    ) -> Result<Self, DataError> {
        let sh = image.shape();
        if sh.len() != 3 || sh[0] != 3 {
            return Err(DataError::InvalidConfig(format!(
                "image must be [3, H, W], got {sh:?}"
            )));
        }
        if (mask.height(), mask.width()) != (sh[1], sh[2]) {
            return Err(DataError::MaskShape {
                mask: PathBuf::new(),
                mask_size: (mask.height(), mask.width()),
                image_size: (sh[1], sh[2]),
            });
        }
        if label == Label::Normal && mask.count() > 0 {
            return Err(DataError::InvalidConfig(
                "normal record with non-empty mask".into(),
            ));
        }
        Ok(ImageRecord {
            id: id.into(),
            image,
            mask,
            label,
            source,
        })
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }
}

/// Per-label record counts in [`Label::ALL`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts(pub [usize; 3]);

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn get(&self, label: Label) -> usize {
        self.0[label.index()]
    }
}

#[derive(Clone, Debug, Default)]
pub struct DatasetManifest {
    pub root: PathBuf,
    /// Sorted lexicographically by id.
    pub entries: Vec<ManifestEntry>,
    pub split_assignment: BTreeMap<String, Split>,
}

impl DatasetManifest {
    pub fn new(root: PathBuf, mut entries: Vec<ManifestEntry>) -> Self {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        DatasetManifest {
            root,
            entries,
            split_assignment: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        counts_of(self.entries.iter())
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split_assignment.get(id).copied()
    }

    pub fn entries_in(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| self.split_of(&e.id) == Some(split))
            .collect()
    }

    pub fn split_counts(&self, split: Split) -> ClassCounts {
        counts_of(self.entries_in(split).into_iter())
    }

    /// Manifest restricted to `ids`, keeping split assignments.
    pub fn subset<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<DatasetManifest, DataError> {
        let mut entries = Vec::new();
        let mut splits = BTreeMap::new();
        for id in ids {
            let e = self
                .entry(id)
                .ok_or_else(|| DataError::UnknownId(id.to_string()))?;
            entries.push(e.clone());
            if let Some(s) = self.split_of(id) {
                splits.insert(id.to_string(), s);
            }
        }
        let mut m = DatasetManifest::new(self.root.clone(), entries);
        m.split_assignment = splits;
        Ok(m)
    }

    /// Loads the record's image and merged mask from disk.
    pub fn load_record(&self, id: &str) -> Result<ImageRecord, DataError> {
        let e = self
            .entry(id)
            .ok_or_else(|| DataError::UnknownId(id.to_string()))?;
        io::load_entry(&self.root, e)
    }
}

fn counts_of<'a>(entries: impl Iterator<Item = &'a ManifestEntry>) -> ClassCounts {
    let mut c = [0; 3];
    for e in entries {
        c[e.label.index()] += 1;
    }
    ClassCounts(c)
}

/// Resize and intensity-normalisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_size: usize,
    pub normalization_mean: [f64; 3],
    pub normalization_std: [f64; 3],
    pub interpolation: Interpolation,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: 224,
            normalization_mean: [0.485, 0.456, 0.406],
            normalization_std: [0.229, 0.224, 0.225],
            interpolation: Interpolation::Bicubic,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.target_size == 0 {
            return Err(DataError::InvalidConfig("target_size must be > 0".into()));
        }
        if self.normalization_std.iter().any(|&s| !(s > 0.0)) {
            return Err(DataError::InvalidConfig(
                "normalization std components must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Resize to `cfg.target_size` and normalise; the mask uses nearest
/// neighbour and is re-binarised at 0.5.
pub fn preprocess_sample(
    record: &ImageRecord,
    cfg: &PreprocessConfig,
) -> Result<(Tensor, BinaryMask), DataError> {
    cfg.validate()?;
    let (image, mask) = resize_sample(record, cfg)?;
    Ok((
        normalize_image(&image, &cfg.normalization_mean, &cfg.normalization_std),
        mask,
    ))
}

/// The resize half of [`preprocess_sample`]; intensities stay in `[0, 1]` so
/// augmentation can run before normalisation.
pub fn resize_sample(
    record: &ImageRecord,
    cfg: &PreprocessConfig,
) -> Result<(Tensor, BinaryMask), DataError> {
    let (h, w) = (record.height(), record.width());
    if h == 0 || w == 0 {
        return Err(DataError::Degenerate(h, w));
    }
    let s = cfg.target_size;
    let image = resize_image(&record.image, s, s, cfg.interpolation)?;
    let mask = resize_mask(&record.mask, s, s)?;
    Ok((image, mask))
}
