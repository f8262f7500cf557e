use rand_chacha::ChaCha8Rng;
use sonoseg_tensor::Var;

use super::ModelError;
use crate::nn::{BatchNorm2d, Conv2d, Ctx, ParamStore};

/// `ReLU(BN(Conv3x3([resize(f_swin), f_cnn])))`.
#[derive(Clone, Debug)]
pub struct FusionBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub cnn_channels: usize,
    pub swin_channels: usize,
}

impl FusionBlock {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cnn_channels: usize,
        swin_channels: usize,
        out: usize,
    ) -> Self {
        FusionBlock {
            conv: Conv2d::new(
                ps,
                rng,
                &format!("{name}.conv"),
                swin_channels + cnn_channels,
                out,
                3,
                1,
                1,
                true,
            ),
            bn: BatchNorm2d::new(ps, &format!("{name}.bn"), out),
            cnn_channels,
            swin_channels,
        }
    }

    pub fn forward<'g>(
        &self,
        ctx: &Ctx<'g>,
        f_cnn: Var<'g>,
        f_swin: Var<'g>,
    ) -> Result<Var<'g>, ModelError> {
        let (cs, ss) = (f_cnn.shape(), f_swin.shape());
        if cs[1] != self.cnn_channels {
            return Err(ModelError::Channels {
                expected: self.cnn_channels,
                got: cs[1],
            });
        }
        if ss[1] != self.swin_channels {
            return Err(ModelError::Channels {
                expected: self.swin_channels,
                got: ss[1],
            });
        }
        let aligned = f_swin.resize_bilinear(cs[2], cs[3]);
        let x = Var::concat(&[aligned, f_cnn], 1);
        Ok(self.bn.forward(ctx, self.conv.forward(ctx, x)).relu())
    }
}
