use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;

use super::{
    morphological_open, otsu_binarize, otsu_threshold, InterpretError, OtsuResult, OTSU_BINS,
};
use crate::data::BinaryMask;
use crate::metrics::iou_score;
use crate::model::ModelOutput;

/// Every stage of the gate-validation pipeline for one image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttentionValidationResult {
    /// `[h, w]` gate coefficients as produced by the decoder.
    #[serde(skip)]
    pub raw: Option<Tensor>,
    /// `[H, W]`, bilinearly upsampled to the mask size.
    #[serde(skip)]
    pub upsampled: Option<Tensor>,
    pub otsu: OtsuResult,
    #[serde(skip)]
    pub mask: Option<BinaryMask>,
    pub iou: f64,
    /// Ground truth has no lesion: IoU is 1 for an empty attention mask
    /// and 0 otherwise.
    pub empty_ground_truth: bool,
}

/// Upsample `alpha` (`[h, w]` or `[1, h, w]`) to the mask size, binarise
/// with Otsu, open with a 3x3 square and score IoU against `gt`.
pub fn attention_validation(
    alpha: &Tensor,
    gt: &BinaryMask,
) -> Result<AttentionValidationResult, InterpretError> {
    let sh = alpha.shape();
    let (h, w) = (sh[sh.len() - 2], sh[sh.len() - 1]);
    if sh[..sh.len() - 2].iter().product::<usize>() != 1 {
        return Err(InterpretError::Shape(sh.to_vec()));
    }
    let raw = alpha.clone().reshape(&[h, w]);
    let (oh, ow) = (gt.height(), gt.width());
    let up = raw.resize_bilinear(oh, ow);
    let otsu = otsu_threshold(up.data(), OTSU_BINS)?;
    let mask = morphological_open(&otsu_binarize(up.data(), oh, ow, &otsu), 1);
    let iou = iou_score(&mask, gt)?;
    Ok(AttentionValidationResult {
        raw: Some(raw),
        upsampled: Some(up),
        otsu,
        mask: Some(mask),
        iou,
        empty_ground_truth: gt.count() == 0,
    })
}

/// [`attention_validation`] on the finest gate of a one-image output.
pub fn attention_validation_pipeline(
    output: &ModelOutput,
    gt: &BinaryMask,
) -> Result<AttentionValidationResult, InterpretError> {
    if output.batch_size() != 1 {
        return Err(InterpretError::Shape(output.seg_probs.shape().to_vec()));
    }
    attention_validation(output.attention_map(None)?, gt)
}
