//! In-memory samples, batching and evaluation.

use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;

use super::TrainError;
use crate::data::{
    augment_sample, normalize_image, resize_sample, sample_rng, AugmentationConfig, BinaryMask,
    DatasetManifest, ImageRecord, Label, PreprocessConfig, Split,
};
use crate::metrics::{
    self, binarize, classification_metrics, confusion_matrix, ClassificationMetrics,
};
use crate::model::{Model, ModelOutput};

/// A resized sample with intensities still in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub mask: BinaryMask,
    pub label: Label,
}

/// What a [`Dataset`] was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Records,
    Split(Split),
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub preprocess: PreprocessConfig,
    pub origin: Origin,
}

/// Ids loaded from disk by every [`Dataset::from_manifest`] call in this
/// process, in load order.
static ACCESS_LOG: Mutex<Vec<String>> = Mutex::new(Vec::new());

pub fn access_log() -> Vec<String> {
    ACCESS_LOG.lock().unwrap().clone()
}

impl Dataset {
    pub fn from_records(
        records: &[ImageRecord],
        preprocess: &PreprocessConfig,
    ) -> Result<Self, TrainError> {
        preprocess.validate()?;
        let samples = records
            .iter()
            .map(|r| {
                let (image, mask) = resize_sample(r, preprocess)?;
                Ok(Sample {
                    id: r.id.clone(),
                    image,
                    mask,
                    label: r.label,
                })
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        Ok(Dataset {
            samples,
            preprocess: preprocess.clone(),
            origin: Origin::Records,
        })
    }

    /// Loads only the records assigned to `split`.
    pub fn from_manifest(
        manifest: &DatasetManifest,
        split: Split,
        preprocess: &PreprocessConfig,
    ) -> Result<Self, TrainError> {
        let ids: Vec<&str> = manifest
            .entries_in(split)
            .into_iter()
            .map(|e| e.id.as_str())
            .collect();
        let mut ds = Self::from_ids(manifest, &ids, preprocess)?;
        ds.origin = Origin::Split(split);
        Ok(ds)
    }

    /// Loads the named records regardless of split.
    pub fn from_ids(
        manifest: &DatasetManifest,
        ids: &[&str],
        preprocess: &PreprocessConfig,
    ) -> Result<Self, TrainError> {
        let records = ids
            .par_iter()
            .map(|id| manifest.load_record(id))
            .collect::<Result<Vec<_>, _>>()?;
        ACCESS_LOG
            .lock()
            .unwrap()
            .extend(ids.iter().map(|s| s.to_string()));
        Self::from_records(&records, preprocess)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in &self.samples {
            c[s.label.index()] += 1;
        }
        c
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            preprocess: self.preprocess.clone(),
            origin: self.origin,
        }
    }

    /// Stacks `indices` into `[N, 3, S, S]` normalised images,
    /// `[N, 1, S, S]` masks and labels. With `augment`, each sample draws
    /// from its own `(seed, epoch, index)` stream.
    pub fn batch(&self, indices: &[usize], augment: Option<(&AugmentationConfig, u64)>) -> Batch {
        let s = self.preprocess.target_size;
        let plane = s * s;
        let prepared: Vec<(Tensor, BinaryMask)> = indices
            .par_iter()
            .map(|&i| {
                let sample = &self.samples[i];
                let (image, mask) = match augment {
                    Some((cfg, epoch)) => {
                        let mut rng = sample_rng(cfg.rng_seed, epoch, i as u64);
                        augment_sample(&sample.image, &sample.mask, cfg, &mut rng)
                    }
                    None => (sample.image.clone(), sample.mask.clone()),
                };
                (
                    normalize_image(
                        &image,
                        &self.preprocess.normalization_mean,
                        &self.preprocess.normalization_std,
                    ),
                    mask,
                )
            })
            .collect();
        let mut images = Vec::with_capacity(indices.len() * 3 * plane);
        let mut masks = Vec::with_capacity(indices.len() * plane);
        for (image, mask) in &prepared {
            images.extend_from_slice(image.data());
            masks.extend(mask.values().map(|b| if b { 1.0 } else { 0.0 }));
        }
        let n = indices.len();
        Batch {
            images: Tensor::new(&[n, 3, s, s], images),
            masks: Tensor::new(&[n, 1, s, s], masks),
            labels: indices
                .iter()
                .map(|&i| self.samples[i].label.index())
                .collect(),
            indices: indices.to_vec(),
        }
    }

    /// Sample order for one epoch.
    pub fn epoch_order(&self, seed: u64, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
        order
    }
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor,
    pub masks: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Per-image and aggregate results of one pass over a dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
    pub dice: Vec<f64>,
    pub iou: Vec<f64>,
    /// Mean over all images; both-empty pairs score 1.
    pub mean_dice: f64,
    pub mean_iou: f64,
    /// Mean over images whose ground truth has a lesion.
    pub lesion_dice: Option<f64>,
    pub classification: ClassificationMetrics,
}

/// Scores `predict` over `ds` in chunks of `batch_size`; `predict` maps a
/// normalised `[N, 3, S, S]` batch to model output.
pub fn evaluate_with(
    ds: &Dataset,
    batch_size: usize,
    classes: usize,
    mut predict: impl FnMut(&Tensor) -> Result<ModelOutput, TrainError>,
) -> Result<Evaluation, TrainError> {
    let mut ev = Evaluation {
        ids: Vec::new(),
        labels: Vec::new(),
        predictions: Vec::new(),
        dice: Vec::new(),
        iou: Vec::new(),
        mean_dice: 0.0,
        mean_iou: 0.0,
        lesion_dice: None,
        classification: classification_metrics(&metrics::ConfusionMatrix::zeros(classes)),
    };
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let batch = ds.batch(chunk, None);
        let out = predict(&batch.images)?;
        ev.predictions
            .extend(metrics::argmax_rows(&out.class_probs));
        for (k, &i) in chunk.iter().enumerate() {
            let pred = binarize(&out.seg_probs.index_axis0(k));
            let gt = &ds.samples[i].mask;
            ev.dice.push(metrics::dice_score(&pred, gt)?);
            ev.iou.push(metrics::iou_score(&pred, gt)?);
            ev.ids.push(ds.samples[i].id.clone());
            ev.labels.push(batch.labels[k]);
        }
    }
    if !ev.dice.is_empty() {
        ev.mean_dice = crate::stats::mean(&ev.dice);
        ev.mean_iou = crate::stats::mean(&ev.iou);
    }
    let lesion: Vec<f64> = ev
        .dice
        .iter()
        .zip(&ds.samples)
        .filter(|(_, s)| s.mask.count() > 0)
        .map(|(d, _)| *d)
        .collect();
    if !lesion.is_empty() {
        ev.lesion_dice = Some(crate::stats::mean(&lesion));
    }
    let cm = confusion_matrix(&ev.predictions, &ev.labels, classes)?;
    ev.classification = classification_metrics(&cm);
    Ok(ev)
}

pub fn evaluate(model: &Model, ds: &Dataset, batch_size: usize) -> Result<Evaluation, TrainError> {
    evaluate_with(ds, batch_size, model.config.num_classes, |x| {
        Ok(model.predict(x)?)
    })
}
