//! Multi-task objective: Dice + BCE for segmentation, class-weighted cross
//! entropy for classification.

use serde::{Deserialize, Serialize};
use sonoseg_tensor::{Tensor, Var};
use thiserror::Error;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: prediction {pred:?} vs target {target:?}")]
    Shape {
        pred: Vec<usize>,
        target: Vec<usize>,
    },
    #[error("class {0} has zero samples")]
    ZeroCount(usize),
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeights {
    /// Inverse frequency over the training split.
    Auto,
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_seg: f64,
    pub lambda_cls: f64,
    pub dice_smooth: f64,
    pub class_weights: ClassWeights,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_seg: 1.0,
            lambda_cls: 0.5,
            dice_smooth: 1.0,
            class_weights: ClassWeights::Auto,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.lambda_seg >= 0.0 && self.lambda_cls >= 0.0) {
            return Err(LossError::InvalidConfig("loss weights must be >= 0".into()));
        }
        if !(self.dice_smooth > 0.0) {
            return Err(LossError::InvalidConfig("dice_smooth must be > 0".into()));
        }
        if let ClassWeights::Fixed(w) = &self.class_weights {
            if w.iter().any(|&v| !(v > 0.0)) {
                return Err(LossError::InvalidConfig(format!(
                    "class weights {w:?} must be > 0"
                )));
            }
        }
        Ok(())
    }
}

fn same_shape(p: Var<'_>, g: Var<'_>) -> Result<(), LossError> {
    let (ps, gs) = (p.shape(), g.shape());
    if ps != gs {
        return Err(LossError::Shape {
            pred: ps,
            target: gs,
        });
    }
    Ok(())
}

/// `1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps)` with sums over every
/// element, so a batch is scored as one pooled volume.
pub fn dice_loss<'g>(p: Var<'g>, g: Var<'g>, eps: f64) -> Result<Var<'g>, LossError> {
    same_shape(p, g)?;
    let inter = p.mul(g).sum_all().scale(2.0).add_scalar(eps);
    let denom = p.sum_all().add(g.sum_all()).add_scalar(eps);
    Ok(inter.div(denom).rsub_scalar(1.0))
}

/// Mean binary cross entropy with clamped probabilities.
pub fn bce_loss<'g>(p: Var<'g>, g: Var<'g>) -> Result<Var<'g>, LossError> {
    same_shape(p, g)?;
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let pos = g.mul(p.ln());
    let neg = g.rsub_scalar(1.0).mul(p.rsub_scalar(1.0).ln());
    Ok(pos.add(neg).mean_all().neg())
}

/// Dice + BCE, unweighted.
pub fn segmentation_loss<'g>(p: Var<'g>, g: Var<'g>, eps: f64) -> Result<Var<'g>, LossError> {
    Ok(dice_loss(p, g, eps)?.add(bce_loss(p, g)?))
}

/// `w_c = N / (C n_c)`; balanced counts give unit weights.
pub fn class_weights_from_counts(counts: &[usize]) -> Result<Vec<f64>, LossError> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(LossError::ZeroCount(c));
    }
    let n: usize = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(counts.iter().map(|&c| n as f64 / (k * c as f64)).collect())
}

fn weighted_targets(
    labels: &[usize],
    weights: &[f64],
    classes: usize,
) -> Result<Tensor, LossError> {
    if weights.len() != classes {
        return Err(LossError::Shape {
            pred: vec![classes],
            target: vec![weights.len()],
        });
    }
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(LossError::Label { label: l, classes });
        }
        t.data_mut()[i * classes + l] = weights[l];
    }
    Ok(t)
}

/// `-(1/N) sum_i sum_c w_c y_ic log p_ic` over `probs [N, C]`.
pub fn weighted_ce_loss<'g>(
    probs: Var<'g>,
    labels: &[usize],
    weights: &[f64],
) -> Result<Var<'g>, LossError> {
    let sh = probs.shape();
    if sh.len() != 2 || sh[0] != labels.len() {
        return Err(LossError::Shape {
            pred: sh,
            target: vec![labels.len()],
        });
    }
    let wy = probs
        .graph()
        .constant(weighted_targets(labels, weights, sh[1])?);
    let logp = probs.clamp(PROB_FLOOR, 1.0).ln();
    Ok(logp.mul(wy).sum_all().scale(-1.0 / labels.len() as f64))
}

/// Component values of one [`total_loss`] evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub seg: f64,
    pub cls: f64,
    pub total: f64,
}

/// `lambda_seg L_seg + lambda_cls L_cls`.
pub fn total_loss<'g>(seg: Var<'g>, cls: Var<'g>, cfg: &LossConfig) -> (Var<'g>, LossBreakdown) {
    let total = seg.scale(cfg.lambda_seg).add(cls.scale(cfg.lambda_cls));
    let breakdown = LossBreakdown {
        seg: seg.value().item(),
        cls: cls.value().item(),
        total: total.value().item(),
    };
    (total, breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sonoseg_tensor::Graph;

    fn eval(f: impl for<'g> Fn(&'g Graph) -> Var<'g>) -> f64 {
        let g = Graph::inference();
        f(&g).value().item()
    }

    #[test]
    fn dice_fixtures() {
        let v = eval(|g| {
            let p = g.constant(Tensor::new(&[4], vec![1.0, 1.0, 0.0, 0.0]));
            let t = g.constant(Tensor::new(&[4], vec![1.0, 0.0, 1.0, 0.0]));
            dice_loss(p, t, 1.0).unwrap()
        });
        assert_eq!(v, 0.4);
        let v = eval(|g| {
            dice_loss(
                g.constant(Tensor::ones(&[2, 2])),
                g.constant(Tensor::ones(&[2, 2])),
                1.0,
            )
            .unwrap()
        });
        assert_eq!(v, 0.0);
        let v = eval(|g| {
            dice_loss(
                g.constant(Tensor::zeros(&[2, 2])),
                g.constant(Tensor::zeros(&[2, 2])),
                1.0,
            )
            .unwrap()
        });
        assert_eq!(v, 0.0);
    }

    #[test]
    fn bce_fixtures() {
        let v = eval(|g| {
            bce_loss(
                g.constant(Tensor::full(&[3], 0.5)),
                g.constant(Tensor::new(&[3], vec![0.0, 1.0, 1.0])),
            )
            .unwrap()
        });
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        let v = eval(|g| {
            bce_loss(
                g.constant(Tensor::full(&[1], 0.9)),
                g.constant(Tensor::ones(&[1])),
            )
            .unwrap()
        });
        assert!((v + 0.9f64.ln()).abs() < 1e-12);
        let v = eval(|g| {
            bce_loss(
                g.constant(Tensor::new(&[2], vec![0.0, 1.0])),
                g.constant(Tensor::new(&[2], vec![0.0, 1.0])),
            )
            .unwrap()
        });
        assert!((0.0..1e-6).contains(&v));
    }

    #[test]
    fn class_weight_fixtures() {
        let w = class_weights_from_counts(&[133, 437, 210]).unwrap();
        for (a, b) in w.iter().zip([1.9549, 0.5950, 1.2381]) {
            assert!((a - b).abs() < 5e-5, "{a} vs {b}");
        }
        assert_eq!(class_weights_from_counts(&[5, 5, 5]).unwrap(), vec![1.0; 3]);
        let w = class_weights_from_counts(&[1, 1, 2]).unwrap();
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-15 && (w[2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            class_weights_from_counts(&[1, 0, 2]),
            Err(LossError::ZeroCount(1))
        );
    }

    #[test]
    fn weighted_ce_fixtures() {
        let probs = Tensor::new(&[1, 3], vec![0.5, 0.25, 0.25]);
        let v = eval(|g| weighted_ce_loss(g.constant(probs.clone()), &[0], &[1.0; 3]).unwrap());
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        let v =
            eval(|g| weighted_ce_loss(g.constant(probs.clone()), &[0], &[2.0, 1.0, 1.0]).unwrap());
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let g = Graph::inference();
        assert!(matches!(
            weighted_ce_loss(g.constant(probs), &[3], &[1.0; 3]),
            Err(LossError::Label { label: 3, .. })
        ));
    }

    #[test]
    fn total_is_linear_combination() {
        let g = Graph::inference();
        let (t, b) = total_loss(
            g.constant(Tensor::scalar(0.4)),
            g.constant(Tensor::scalar(0.6)),
            &LossConfig::default(),
        );
        assert!((t.value().item() - 0.7).abs() < 1e-15);
        assert_eq!(b.seg, 0.4);
    }
}
