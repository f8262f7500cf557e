//! Overlap and classification metrics.

use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;
use thiserror::Error;

use crate::data::BinaryMask;

/// Probabilities above this are foreground.
pub const SEG_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("mask shapes differ: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error("prediction and truth lists differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
}

fn check(p: &BinaryMask, g: &BinaryMask) -> Result<(), MetricError> {
    let (a, b) = ((p.height(), p.width()), (g.height(), g.width()));
    if a != b {
        return Err(MetricError::Shape(a, b));
    }
    Ok(())
}

/// `2|P ∩ G| / (|P| + |G|)`, 1.0 when both are empty.
pub fn dice_score(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    check(pred, gt)?;
    let denom = pred.count() + gt.count();
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * pred.intersection_count(gt) as f64 / denom as f64)
}

/// `|P ∩ G| / |P ∪ G|`, 1.0 when both are empty.
pub fn iou_score(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    check(pred, gt)?;
    let union = pred.union_count(gt);
    if union == 0 {
        return Ok(1.0);
    }
    Ok(pred.intersection_count(gt) as f64 / union as f64)
}

/// Binarises one `[1, H, W]` or `[H, W]` probability map.
pub fn binarize(probs: &Tensor) -> BinaryMask {
    BinaryMask::from_tensor(probs, SEG_THRESHOLD)
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion_matrix(
    preds: &[usize],
    truths: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix, MetricError> {
    if preds.len() != truths.len() {
        return Err(MetricError::Length(preds.len(), truths.len()));
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&p, &t) in preds.iter().zip(truths) {
        for label in [p, t] {
            if label >= classes {
                return Err(MetricError::Label { label, classes });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// Per-class rates as fractions in `[0, 1]`. A rate whose denominator is
/// zero is reported as 0 and flagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// Macro averages over classes.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> ClassificationMetrics {
    let k = cm.classes();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted: u64 = (0..k).map(|r| cm.counts[r][c]).sum();
            let support: u64 = cm.counts[c].iter().sum();
            let (precision, precision_undefined) = ratio(tp, predicted);
            let (recall, recall_undefined) = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect();
    let macro_of = |f: fn(&ClassMetrics) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    ClassificationMetrics {
        accuracy: ratio(cm.trace(), cm.total()).0,
        precision: macro_of(|m| m.precision),
        recall: macro_of(|m| m.recall),
        f1: macro_of(|m| m.f1),
        per_class,
    }
}

/// Index of the largest entry of each `[N, C]` row, lowest index on ties.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let sh = probs.shape();
    let c = sh[sh.len() - 1];
    probs
        .data()
        .chunks(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> BinaryMask {
        BinaryMask::from_bools(
            1,
            bits.len(),
            &bits.iter().map(|&b| b == 1).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn overlap_fixtures() {
        let (p, g) = (mask(&[1, 1, 0, 0]), mask(&[1, 0, 1, 0]));
        assert_eq!(dice_score(&p, &g).unwrap(), 0.5);
        assert_eq!(iou_score(&p, &g).unwrap(), 1.0 / 3.0);
        assert_eq!(dice_score(&p, &p).unwrap(), 1.0);
        let empty = mask(&[0, 0, 0, 0]);
        assert_eq!(dice_score(&empty, &empty).unwrap(), 1.0);
        assert_eq!(
            iou_score(&mask(&[1, 0, 0, 0]), &mask(&[0, 1, 0, 0])).unwrap(),
            0.0
        );
        assert!(dice_score(&mask(&[1]), &empty).is_err());
    }

    #[test]
    fn two_class_metrics() {
        let cm = ConfusionMatrix {
            counts: vec![vec![1, 1], vec![0, 2]],
        };
        let m = classification_metrics(&cm);
        assert_eq!(m.per_class[0].precision, 1.0);
        assert_eq!(m.per_class[0].recall, 0.5);
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.75);
    }

    #[test]
    fn never_predicted_class_is_flagged() {
        let cm = confusion_matrix(&[0, 0, 1], &[0, 2, 1], 3).unwrap();
        let m = classification_metrics(&cm);
        assert_eq!(m.per_class[2].precision, 0.0);
        assert!(m.per_class[2].precision_undefined);
        assert_eq!(
            confusion_matrix(&[], &[], 3).unwrap(),
            ConfusionMatrix::zeros(3)
        );
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        let t = Tensor::new(&[2, 3], vec![0.3, 0.4, 0.3, 0.4, 0.2, 0.4]);
        assert_eq!(argmax_rows(&t), vec![1, 0]);
    }
}
