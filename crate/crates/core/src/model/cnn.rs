use rand_chacha::ChaCha8Rng;
use sonoseg_tensor::Var;

use super::{BackboneSpec, FeaturePyramid};
use crate::nn::{BatchNorm2d, Conv2d, Ctx, ParamStore};

/// 3x3 convolution, batch norm, ReLU.
#[derive(Clone, Debug)]
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBnRelu {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Self {
        ConvBnRelu {
            conv: Conv2d::new(
                ps,
                rng,
                &format!("{name}.conv"),
                cin,
                cout,
                3,
                stride,
                1,
                false,
            ),
            bn: BatchNorm2d::new(ps, &format!("{name}.bn"), cout),
        }
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Var<'g> {
        self.bn.forward(ctx, self.conv.forward(ctx, x)).relu()
    }
}

/// Plain strided-convolution pyramid: a stride-2 stem, then one stride-2
/// unit per stage followed by `depth - 1` stride-1 units.
#[derive(Clone, Debug)]
pub struct CnnBranch {
    pub stem: ConvBnRelu,
    pub stages: Vec<Vec<ConvBnRelu>>,
}

impl CnnBranch {
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, spec: &BackboneSpec) -> Self {
        let ch = spec.stage_channels;
        let stem = ConvBnRelu::new(ps, rng, &format!("{name}.stem"), 3, ch[0], 2);
        let mut stages = Vec::with_capacity(4);
        for k in 0..4 {
            let cin = if k == 0 { ch[0] } else { ch[k - 1] };
            let units = (0..spec.depths[k])
                .map(|u| {
                    let (i, s) = if u == 0 { (cin, 2) } else { (ch[k], 1) };
                    ConvBnRelu::new(
                        ps,
                        rng,
                        &format!("{name}.stage{}.unit{u}", k + 1),
                        i,
                        ch[k],
                        s,
                    )
                })
                .collect();
            stages.push(units);
        }
        CnnBranch { stem, stages }
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> FeaturePyramid<'g> {
        let mut h = self.stem.forward(ctx, x);
        let mut out = Vec::with_capacity(4);
        for stage in &self.stages {
            for unit in stage {
                h = unit.forward(ctx, h);
            }
            out.push(h);
        }
        FeaturePyramid {
            stages: [out[0], out[1], out[2], out[3]],
        }
    }
}
