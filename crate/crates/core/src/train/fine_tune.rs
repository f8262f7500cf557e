//! Progressive fine-tuning on a shifted target domain.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{evaluate, train_with, CheckpointBundle, Dataset, TrainConfig, TrainError};
use crate::data::{
    make_adaptation_splits, AdaptationSplitSpec, DatasetManifest, ManifestEntry, Source,
};
use crate::objectives::LossConfig;

/// One row of the learning-curve table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub dice: f64,
    pub iou: f64,
    pub lesion_dice: Option<f64>,
    pub accuracy: f64,
}

/// Resumes training from `checkpoint` on `train` with every parameter
/// unfrozen, then scores `test`. Early stopping monitors Dice on the
/// adaptation set itself so the target test records stay unseen. An empty
/// `train` gives the zero-shot score.
pub fn fine_tune(
    checkpoint: &CheckpointBundle,
    train: &Dataset,
    test: &Dataset,
    fraction: f64,
    cfg: &TrainConfig,
    loss: &LossConfig,
) -> Result<(CurvePoint, CheckpointBundle), TrainError> {
    let mut model = checkpoint.to_model()?;
    let bundle = if train.is_empty() {
        checkpoint.clone()
    } else {
        let out = train_with(&mut model, train, cfg, loss, |m, _| {
            Ok(Some(evaluate(m, train, cfg.batch_size)?.mean_dice))
        })?;
        out.best
    };
    let ev = evaluate(&model, test, cfg.batch_size)?;
    let point = CurvePoint {
        fraction,
        n_train: train.len(),
        n_test: test.len(),
        dice: ev.mean_dice,
        iou: ev.mean_iou,
        lesion_dice: ev.lesion_dice,
        accuracy: ev.classification.accuracy,
    };
    Ok((point, bundle))
}

/// Manifest with ids and labels only, for reusing the split builders on
/// in-memory samples.
fn manifest_view(ds: &Dataset) -> DatasetManifest {
    let entries = ds
        .samples
        .iter()
        .map(|s| ManifestEntry {
            id: s.id.clone(),
            image_path: PathBuf::new(),
            mask_paths: Vec::new(),
            label: s.label,
            source: Source::External,
        })
        .collect();
    DatasetManifest::new(PathBuf::new(), entries)
}

/// Zero-shot row on the whole pool, then one row per fraction of nested
/// stratified adaptation subsets, each scored on its complement.
pub fn adaptation_curve(
    checkpoint: &CheckpointBundle,
    pool: &Dataset,
    fractions: &[f64],
    split_seed: u64,
    cfg: &TrainConfig,
    loss: &LossConfig,
) -> Result<Vec<CurvePoint>, TrainError> {
    let spec = make_adaptation_splits(
        &manifest_view(pool),
        &AdaptationSplitSpec::new(fractions.to_vec()),
        split_seed,
    )?;
    let index: HashMap<&str, usize> = pool
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let pick =
        |ids: &[String]| pool.subset(&ids.iter().map(|id| index[id.as_str()]).collect::<Vec<_>>());
    let empty = pool.subset(&[]);
    let mut points = vec![fine_tune(checkpoint, &empty, pool, 0.0, cfg, loss)?.0];
    for split in &spec.splits {
        let (train, test) = (pick(&split.train), pick(&split.test));
        points.push(fine_tune(checkpoint, &train, &test, split.fraction, cfg, loss)?.0);
    }
    Ok(points)
}
