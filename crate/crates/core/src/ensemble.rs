//! Averaging several independently seeded models.

use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;
use thiserror::Error;

use crate::metrics::argmax_rows;
use crate::model::{Model, ModelError, ModelOutput};

/// Seeds of the default three-member ensemble.
pub const DEFAULT_MEMBER_SEEDS: [u64; 3] = [42, 77, 123];

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least {min} members, got {got}")]
    TooFewMembers { min: usize, got: usize },
    #[error("member {0} has a different model configuration")]
    ConfigMismatch(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of class probabilities.
    #[default]
    Probabilities,
    /// Softmax of the mean class logits.
    Logits,
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    pub members: Vec<Model>,
    pub aggregation: Aggregation,
}

#[derive(Clone, Debug)]
pub struct EnsembleOutput {
    pub mean: ModelOutput,
    pub members: Vec<ModelOutput>,
    /// Argmax of the aggregated class probabilities.
    pub predictions: Vec<usize>,
}

impl EnsembleOutput {
    /// Per-pixel variance of the members' segmentation probabilities.
    pub fn seg_variance(&self) -> Tensor {
        let k = self.members.len() as f64;
        let mean = self.mean.seg_probs.data();
        let mut var = vec![0.0; mean.len()];
        for m in &self.members {
            for ((v, &x), &mu) in var.iter_mut().zip(m.seg_probs.data()).zip(mean) {
                *v += (x - mu) * (x - mu) / k;
            }
        }
        Tensor::new(self.mean.seg_probs.shape(), var)
    }
}

/// Running mean `m_k = m_{k-1} + (x_k - m_{k-1}) / k`, which returns each
/// element unchanged when all inputs agree.
pub fn mean_tensors<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> Tensor {
    let mut it = tensors.into_iter();
    let mut acc = it.next().expect("at least one tensor").clone();
    for (k, t) in it.enumerate() {
        let n = (k + 2) as f64;
        for (a, &x) in acc.data_mut().iter_mut().zip(t.data()) {
            *a += (x - *a) / n;
        }
    }
    acc
}

fn softmax_rows(logits: &Tensor) -> Tensor {
    let c = *logits.shape().last().unwrap();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - m).exp());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Aggregates member outputs of the same batch.
pub fn aggregate(outputs: &[ModelOutput], aggregation: Aggregation) -> ModelOutput {
    let mean_of = |f: fn(&ModelOutput) -> &Tensor| mean_tensors(outputs.iter().map(f));
    let class_logits = mean_of(|o| &o.class_logits);
    let class_probs = match aggregation {
        Aggregation::Probabilities => mean_of(|o| &o.class_probs),
        Aggregation::Logits => softmax_rows(&class_logits),
    };
    ModelOutput {
        seg_probs: mean_of(|o| &o.seg_probs),
        class_logits,
        class_probs,
        attention_maps: (0..outputs[0].attention_maps.len())
            .map(|i| mean_tensors(outputs.iter().map(|o| &o.attention_maps[i])))
            .collect(),
        bottleneck_features: mean_of(|o| &o.bottleneck_features),
    }
}

impl Ensemble {
    pub fn new(members: Vec<Model>, aggregation: Aggregation) -> Result<Self, EnsembleError> {
        if members.len() < 2 {
            return Err(EnsembleError::TooFewMembers {
                min: 2,
                got: members.len(),
            });
        }
        if let Some(i) = members
            .iter()
            .position(|m| m.config.without_seed() != members[0].config.without_seed())
        {
            return Err(EnsembleError::ConfigMismatch(i));
        }
        Ok(Ensemble {
            members,
            aggregation,
        })
    }

    pub fn predict(&self, images: &Tensor) -> Result<EnsembleOutput, EnsembleError> {
        let members = self
            .members
            .iter()
            .map(|m| m.predict(images))
            .collect::<Result<Vec<_>, _>>()?;
        let mean = aggregate(&members, self.aggregation);
        let predictions = argmax_rows(&mean.class_probs);
        Ok(EnsembleOutput {
            mean,
            members,
            predictions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_fixtures() {
        let seg = [0.2, 0.4, 0.9].map(|v| Tensor::new(&[1], vec![v]));
        assert!((mean_tensors(seg.iter()).data()[0] - 0.5).abs() < 1e-15);
        let rows = [[0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.1, 0.2, 0.7]]
            .map(|r| Tensor::new(&[1, 3], r.to_vec()));
        let m = mean_tensors(rows.iter());
        for (a, b) in m.data().iter().zip([0.3, 0.4, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(argmax_rows(&m), vec![1]);
    }

    #[test]
    fn identical_inputs_are_returned_exactly() {
        let t = Tensor::new(&[3], vec![0.1, 1.0 / 3.0, 0.7]);
        assert_eq!(mean_tensors([&t, &t, &t]), t);
    }
}
