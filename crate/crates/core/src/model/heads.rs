use rand_chacha::ChaCha8Rng;
use sonoseg_tensor::Var;

use crate::nn::{Conv2d, Ctx, Linear, ParamStore};

/// 1x1 convolution to one channel, then a sigmoid.
#[derive(Clone, Debug)]
pub struct SegmentationHead {
    pub conv: Conv2d,
}

impl SegmentationHead {
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, channels: usize) -> Self {
        SegmentationHead {
            conv: Conv2d::new(ps, rng, &format!("{name}.conv"), channels, 1, 1, 1, 0, true),
        }
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, d1: Var<'g>) -> Var<'g> {
        self.conv.forward(ctx, d1).sigmoid()
    }
}

/// Global average pooling, `Linear -> ReLU -> Linear`. The softmax is left
/// to the caller so the logits stay available for Grad-CAM.
#[derive(Clone, Debug)]
pub struct ClassificationHead {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl ClassificationHead {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        hidden: usize,
        classes: usize,
    ) -> Self {
        ClassificationHead {
            fc1: Linear::new(ps, rng, &format!("{name}.fc1"), channels, hidden),
            fc2: Linear::new_glorot(ps, rng, &format!("{name}.fc2"), hidden, classes),
        }
    }

    pub fn logits<'g>(&self, ctx: &Ctx<'g>, f4: Var<'g>) -> Var<'g> {
        let pooled = f4.mean_axes(&[2, 3], false);
        self.fc2.forward(ctx, self.fc1.forward(ctx, pooled).relu())
    }
}
