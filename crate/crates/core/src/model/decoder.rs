use rand_chacha::ChaCha8Rng;
use sonoseg_tensor::Var;

use super::cnn::ConvBnRelu;
use super::{FeaturePyramid, ModelError};
use crate::nn::{Conv2d, ConvTranspose2d, Ctx, ParamStore};

/// `alpha = sigmoid(psi(ReLU(W_g g + W_x x)))`, `x_att = x * alpha`, with
/// all three projections as 1x1 convolutions.
#[derive(Clone, Debug)]
pub struct AttentionGate {
    pub w_g: Conv2d,
    pub w_x: Conv2d,
    pub psi: Conv2d,
}

impl AttentionGate {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        gate_channels: usize,
        skip_channels: usize,
        inter: usize,
    ) -> Self {
        AttentionGate {
            w_g: Conv2d::new(
                ps,
                rng,
                &format!("{name}.w_g"),
                gate_channels,
                inter,
                1,
                1,
                0,
                true,
            ),
            w_x: Conv2d::new(
                ps,
                rng,
                &format!("{name}.w_x"),
                skip_channels,
                inter,
                1,
                1,
                0,
                true,
            ),
            psi: Conv2d::new(ps, rng, &format!("{name}.psi"), inter, 1, 1, 1, 0, true),
        }
    }

    /// Returns `(x_att, alpha)` with `alpha` of shape `[N, 1, H, W]`.
    pub fn forward<'g>(
        &self,
        ctx: &Ctx<'g>,
        x: Var<'g>,
        g: Var<'g>,
    ) -> Result<(Var<'g>, Var<'g>), ModelError> {
        let (xs, gs) = (x.shape(), g.shape());
        if xs[2..] != gs[2..] {
            return Err(ModelError::InvalidConfig(format!(
                "gate signal {gs:?} does not match skip {xs:?}"
            )));
        }
        let pre = self
            .w_g
            .forward(ctx, g)
            .add(self.w_x.forward(ctx, x))
            .relu();
        let alpha = self.psi.forward(ctx, pre).sigmoid();
        Ok((x.mul(alpha), alpha))
    }
}

#[derive(Clone, Debug)]
pub struct GatedBlock {
    pub up: ConvTranspose2d,
    pub gate: AttentionGate,
    pub conv: ConvBnRelu,
}

#[derive(Clone, Debug)]
pub struct UpBlock {
    pub up: ConvTranspose2d,
    pub conv: ConvBnRelu,
}

/// Three gated blocks climbing from stride 32 to stride 4 over the fused
/// skips, then two skip-free blocks up to full resolution.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub gated: Vec<GatedBlock>,
    pub tail: Vec<UpBlock>,
}

impl Decoder {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        fusion: &[usize; 4],
        widths: &[usize; 5],
    ) -> Self {
        let mut cin = fusion[3];
        let mut gated = Vec::with_capacity(3);
        for i in 0..3 {
            let skip = fusion[2 - i];
            let w = widths[i];
            let bname = format!("{name}.gated{}", i + 1);
            gated.push(GatedBlock {
                up: ConvTranspose2d::new(ps, rng, &format!("{bname}.up"), cin, w, 2),
                gate: AttentionGate::new(
                    ps,
                    rng,
                    &format!("{bname}.gate"),
                    w,
                    skip,
                    (skip / 2).max(1),
                ),
                conv: ConvBnRelu::new(ps, rng, &format!("{bname}.conv"), w + skip, w, 1),
            });
            cin = w;
        }
        let mut tail = Vec::with_capacity(2);
        for (i, &w) in widths[3..].iter().enumerate() {
            let bname = format!("{name}.up{}", i + 1);
            tail.push(UpBlock {
                up: ConvTranspose2d::new(ps, rng, &format!("{bname}.up"), cin, w, 2),
                conv: ConvBnRelu::new(ps, rng, &format!("{bname}.conv"), w, w, 1),
            });
            cin = w;
        }
        Decoder { gated, tail }
    }

    /// Returns the full-resolution decoder map and the gate maps, coarse
    /// to fine.
    pub fn forward<'g>(
        &self,
        ctx: &Ctx<'g>,
        pyramid: &FeaturePyramid<'g>,
    ) -> Result<(Var<'g>, Vec<Var<'g>>), ModelError> {
        let mut d = pyramid.stages[3];
        let mut maps = Vec::with_capacity(3);
        for (i, block) in self.gated.iter().enumerate() {
            let up = block.up.forward(ctx, d);
            let (x_att, alpha) = block.gate.forward(ctx, pyramid.stages[2 - i], up)?;
            d = block.conv.forward(ctx, Var::concat(&[up, x_att], 1));
            maps.push(alpha);
        }
        for block in &self.tail {
            d = block.conv.forward(ctx, block.up.forward(ctx, d));
        }
        Ok((d, maps))
    }
}
