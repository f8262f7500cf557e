use serde::{Deserialize, Serialize};
use sonoseg_tensor::{Graph, Tensor};

use super::InterpretError;
use crate::model::Model;
use crate::nn::Ctx;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCamResult {
    pub class: usize,
    /// Spatially averaged gradient per channel.
    pub channel_weights: Vec<f64>,
    /// `[h, w]` at feature resolution, non-negative.
    #[serde(skip)]
    pub heatmap: Option<Tensor>,
    /// `[H, W]` upsampled and scaled to `[0, 1]`.
    #[serde(skip)]
    pub overlay: Option<Tensor>,
}

/// `ReLU(sum_k a_k A^k)` with `a_k` the spatial mean of `dy/dA^k`.
/// `activations` and `grads` are `[K, h, w]`.
pub fn grad_cam_map(activations: &Tensor, grads: &Tensor) -> (Vec<f64>, Tensor) {
    let sh = activations.shape();
    assert_eq!(sh, grads.shape(), "activation and gradient shapes differ");
    let (k, plane) = (sh[0], sh[1] * sh[2]);
    let weights: Vec<f64> = grads
        .data()
        .chunks(plane)
        .map(|g| g.iter().sum::<f64>() / plane as f64)
        .collect();
    let mut map = vec![0.0; plane];
    for (a, &wk) in activations.data().chunks(plane).zip(&weights).take(k) {
        for (m, &v) in map.iter_mut().zip(a) {
            *m += wk * v;
        }
    }
    map.iter_mut().for_each(|v| *v = v.max(0.0));
    (weights, Tensor::new(&[sh[1], sh[2]], map))
}

/// Scales to `[0, 1]`; a constant map becomes all zeros.
pub fn min_max_normalize(t: &Tensor) -> Tensor {
    let (lo, hi) = (t.min(), t.max());
    let span = hi - lo;
    let data = t
        .data()
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect();
    Tensor::new(t.shape(), data)
}

/// Grad-CAM on the deepest fused feature map for `class`, taking gradients
/// of the pre-softmax logit. `image` is `[3, H, W]` or `[1, 3, H, W]`,
/// already normalised.
pub fn grad_cam(
    model: &Model,
    image: &Tensor,
    class: usize,
) -> Result<GradCamResult, InterpretError> {
    let classes = model.config.num_classes;
    if class >= classes {
        return Err(InterpretError::ClassIndex { class, classes });
    }
    let sh = image.shape();
    let image = match sh.len() {
        3 => image.clone().reshape(&[1, sh[0], sh[1], sh[2]]),
        4 if sh[0] == 1 => image.clone(),
        _ => return Err(InterpretError::Shape(sh.to_vec())),
    };
    let (h, w) = (image.shape()[2], image.shape()[3]);
    let g = Graph::new();
    let ctx = Ctx::new(&g, &model.params, false);
    let out = model.net.forward(&ctx, g.constant(image))?;
    g.retain_grad(out.bottleneck);
    let mut seed = Tensor::zeros(&[1, classes]);
    seed.data_mut()[class] = 1.0;
    let grads = g.backward_with(out.class_logits, seed);
    let act = out.bottleneck.value();
    let ash = act.shape();
    let act = (*act).clone().reshape(&ash[1..]);
    let grad = grads
        .get(out.bottleneck)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(&ash[1..]))
        .reshape(&ash[1..]);
    let (channel_weights, heatmap) = grad_cam_map(&act, &grad);
    let overlay = min_max_normalize(&heatmap.resize_bilinear(h, w));
    Ok(GradCamResult {
        class,
        channel_weights,
        heatmap: Some(heatmap),
        overlay: Some(overlay),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_fixture() {
        let a = Tensor::new(&[2, 2, 2], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let g = Tensor::new(&[2, 2, 2], vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
        let (w, map) = grad_cam_map(&a, &g);
        assert_eq!(w, vec![1.0, -1.0]);
        assert_eq!(map.data(), &[1.0, 0.0, 0.0, 0.0]);
        let (_, zero) = grad_cam_map(&a, &Tensor::zeros(&[2, 2, 2]));
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }
}
