//! Learning-rate schedule, gradient clipping and AdamW.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;

use crate::nn::{ParamId, ParamStore};

/// `eta_min + (eta_max - eta_min) (1 + cos(pi t / T)) / 2`, with `t`
/// clamped to `[0, T]`. Evaluated from the `eta_max` end so step 0 returns
/// `eta_max` exactly.
pub fn cosine_lr(step: usize, total: usize, eta_max: f64, eta_min: f64) -> f64 {
    if total == 0 {
        return eta_max;
    }
    let t = step.min(total) as f64 / total as f64;
    eta_max - 0.5 * (eta_max - eta_min) * (1.0 - (std::f64::consts::PI * t).cos())
}

pub fn global_norm(grads: &[(ParamId, Tensor)]) -> f64 {
    grads
        .iter()
        .map(|(_, g)| g.squared_norm())
        .sum::<f64>()
        .sqrt()
}

/// Rescales every gradient by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [(ParamId, Tensor)], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Adam with decoupled weight decay:
/// `p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)`.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: HashMap<ParamId, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[(ParamId, Tensor)], lr: f64) {
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (id, g) in grads {
            let p = params.get_mut(*id);
            let n = p.numel();
            let (m, v) = self
                .moments
                .entry(*id)
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *pv);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> (ParamStore, ParamId) {
        let mut ps = ParamStore::new();
        let id = ps.add("p", Tensor::new(&[1], vec![v]), true);
        (ps, id)
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 10, 1e-3, 0.0), 1e-3);
        assert!(cosine_lr(10, 10, 1e-3, 1e-6) - 1e-6 < 1e-18);
        assert!((cosine_lr(5, 10, 1.0, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clipping_fixtures() {
        let id = ParamId(0);
        let mut g = vec![(id, Tensor::new(&[2], vec![0.3, 0.4]))];
        clip_gradients(&mut g, 0.5);
        assert_eq!(g[0].1.data(), &[0.3, 0.4]);
        let mut g = vec![(id, Tensor::new(&[1], vec![2.0]))];
        assert_eq!(clip_gradients(&mut g, 0.5), 2.0);
        assert_eq!(g[0].1.data(), &[0.5]);
    }

    #[test]
    fn adamw_fixtures() {
        let (mut ps, id) = scalar_store(1.0);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        opt.step(&mut ps, &[(id, Tensor::new(&[1], vec![0.0]))], 0.1);
        assert_eq!(ps.get(id).data()[0], 1.0);

        let (mut ps, id) = scalar_store(2.0);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.5,
            ..Default::default()
        });
        opt.step(&mut ps, &[(id, Tensor::new(&[1], vec![0.0]))], 0.1);
        assert!((ps.get(id).data()[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);

        let (mut ps, id) = scalar_store(1.0);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        opt.step(&mut ps, &[(id, Tensor::new(&[1], vec![1.0]))], 0.1);
        assert!((ps.get(id).data()[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
    }
}
