//! The dual-branch segmentation/classification network.
//!
//! A convolutional branch and a shifted-window transformer branch each emit
//! a four-stage pyramid at strides 4, 8, 16 and 32. Per-stage fusion blocks
//! merge the two; the deepest fused map is the decoder bottleneck and the
//! classification input, the other three are attention-gated skips.

mod cnn;
mod decoder;
mod fusion;
mod heads;
mod swin;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sonoseg_tensor::{Graph, Tensor, Var};
use thiserror::Error;

use crate::nn::{Ctx, ParamStore};

pub use cnn::{CnnBranch, ConvBnRelu};
pub use decoder::{AttentionGate, Decoder};
pub use fusion::FusionBlock;
pub use heads::{ClassificationHead, SegmentationHead};
pub use swin::{window_attention_mask, SwinBranch};

/// Largest stride in the stage contract; inputs must be divisible by it.
pub const MAX_STRIDE: usize = 32;
pub const STAGE_STRIDES: [usize; 4] = [4, 8, 16, 32];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("input {h}x{w} is not divisible by {MAX_STRIDE}")]
    InputSize { h: usize, w: usize },
    #[error("expected {expected} input channels, got {got}")]
    Channels { expected: usize, got: usize },
    #[error("attention gate index {index} out of range (have {count})")]
    GateIndex { index: usize, count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    CnnReference,
    CnnToy,
    SwinReference,
    SwinToy,
}

impl BackboneKind {
    pub fn is_cnn(self) -> bool {
        matches!(self, BackboneKind::CnnReference | BackboneKind::CnnToy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    pub stage_strides: [usize; 4],
    pub stage_channels: [usize; 4],
    /// Blocks per stage.
    pub depths: [usize; 4],
    /// Attention heads per stage (transformer branches only).
    pub heads: [usize; 4],
    pub window: usize,
    pub mlp_ratio: usize,
    /// Initialise from the checkpoint named by `ModelConfig::pretrained_path`.
    pub pretrained: bool,
}

impl BackboneSpec {
    pub fn cnn_toy() -> Self {
        BackboneSpec {
            kind: BackboneKind::CnnToy,
            stage_strides: STAGE_STRIDES,
            stage_channels: [16, 32, 64, 128],
            depths: [1, 1, 1, 1],
            heads: [0; 4],
            window: 0,
            mlp_ratio: 0,
            pretrained: false,
        }
    }

    /// Widths of the four EfficientNet-B3 stages that end at strides 4..32.
    pub fn cnn_reference() -> Self {
        BackboneSpec {
            kind: BackboneKind::CnnReference,
            stage_channels: [32, 48, 136, 384],
            depths: [2, 3, 5, 6],
            ..Self::cnn_toy()
        }
    }

    pub fn swin_toy() -> Self {
        BackboneSpec {
            kind: BackboneKind::SwinToy,
            stage_strides: STAGE_STRIDES,
            stage_channels: [24, 48, 96, 192],
            depths: [2, 2, 2, 2],
            heads: [1, 2, 4, 8],
            window: 7,
            mlp_ratio: 2,
            pretrained: false,
        }
    }

    /// Swin-B geometry.
    pub fn swin_reference() -> Self {
        BackboneSpec {
            kind: BackboneKind::SwinReference,
            stage_channels: [128, 256, 512, 1024],
            depths: [2, 2, 18, 2],
            heads: [4, 8, 16, 32],
            mlp_ratio: 4,
            ..Self::swin_toy()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.stage_strides != STAGE_STRIDES {
            return bad(format!(
                "stage strides must be {STAGE_STRIDES:?}, got {:?}",
                self.stage_strides
            ));
        }
        if self.stage_channels.contains(&0) || self.depths.contains(&0) {
            return bad(format!(
                "{:?}: stage channels and depths must be positive",
                self.kind
            ));
        }
        if !self.kind.is_cnn() {
            if self.window == 0 || self.mlp_ratio == 0 {
                return bad("window and mlp_ratio must be positive".into());
            }
            for (c, h) in self.stage_channels.iter().zip(&self.heads) {
                if *h == 0 || c % h != 0 {
                    return bad(format!("stage width {c} not divisible by {h} heads"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cnn: BackboneSpec,
    pub swin: BackboneSpec,
    pub fusion_widths: [usize; 4],
    /// Three gated blocks followed by two skip-free blocks.
    pub decoder_widths: [usize; 5],
    pub num_classes: usize,
    pub input_size: usize,
    pub cls_hidden: usize,
    pub init_seed: u64,
    pub pretrained_path: Option<std::path::PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ModelConfig {
    pub fn toy() -> Self {
        ModelConfig {
            cnn: BackboneSpec::cnn_toy(),
            swin: BackboneSpec::swin_toy(),
            fusion_widths: [16, 32, 64, 128],
            decoder_widths: [64, 32, 16, 16, 8],
            num_classes: 3,
            input_size: 224,
            cls_hidden: 256,
            init_seed: 0,
            pretrained_path: None,
        }
    }

    /// Full-scale geometry; far too large for CPU training in f64.
    pub fn reference() -> Self {
        ModelConfig {
            cnn: BackboneSpec::cnn_reference(),
            swin: BackboneSpec::swin_reference(),
            fusion_widths: [64, 128, 256, 512],
            decoder_widths: [256, 128, 64, 32, 16],
            ..Self::toy()
        }
    }

    /// Smallest sensible network, for gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            cnn: BackboneSpec {
                stage_channels: [2, 2, 3, 3],
                ..BackboneSpec::cnn_toy()
            },
            swin: BackboneSpec {
                stage_channels: [2, 4, 4, 4],
                heads: [1, 2, 1, 1],
                depths: [2, 1, 1, 1],
                window: 2,
                mlp_ratio: 1,
                ..BackboneSpec::swin_toy()
            },
            fusion_widths: [2, 2, 3, 3],
            decoder_widths: [3, 2, 2, 2, 2],
            cls_hidden: 4,
            input_size: 32,
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.cnn.kind.is_cnn() || self.swin.kind.is_cnn() {
            return Err(ModelError::InvalidConfig(
                "cnn branch needs a cnn kind and swin branch a swin kind".into(),
            ));
        }
        self.cnn.validate()?;
        self.swin.validate()?;
        if self.num_classes < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "num_classes = {} must be >= 2",
                self.num_classes
            )));
        }
        if self.fusion_widths.contains(&0)
            || self.decoder_widths.contains(&0)
            || self.cls_hidden == 0
        {
            return Err(ModelError::InvalidConfig(
                "fusion, decoder and head widths must be positive".into(),
            ));
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(MAX_STRIDE) {
            return Err(ModelError::InputSize {
                h: self.input_size,
                w: self.input_size,
            });
        }
        if (self.cnn.pretrained || self.swin.pretrained) && self.pretrained_path.is_none() {
            return Err(ModelError::InvalidConfig(
                "pretrained backbone requested without pretrained_path".into(),
            ));
        }
        Ok(())
    }

    /// The configuration with seed and weight source cleared, for comparing
    /// architectures.
    pub fn without_seed(&self) -> ModelConfig {
        ModelConfig {
            init_seed: 0,
            pretrained_path: None,
            ..self.clone()
        }
    }
}

/// Four stage maps, each `[N, C_k, H / s_k, W / s_k]`.
pub struct FeaturePyramid<'g> {
    pub stages: [Var<'g>; 4],
}

impl FeaturePyramid<'_> {
    pub fn values(&self) -> [Tensor; 4] {
        self.stages.map(|v| (*v.value()).clone())
    }
}

/// Graph-level outputs of one forward pass.
pub struct ForwardVars<'g> {
    /// `[N, 1, H, W]`.
    pub seg_probs: Var<'g>,
    /// `[N, classes]` before the softmax.
    pub class_logits: Var<'g>,
    pub class_probs: Var<'g>,
    /// `[N, 1, h, w]` per gate, coarse to fine.
    pub attention: Vec<Var<'g>>,
    /// Deepest fused map.
    pub bottleneck: Var<'g>,
}

/// Materialised forward results.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub seg_probs: Tensor,
    pub class_logits: Tensor,
    pub class_probs: Tensor,
    pub attention_maps: Vec<Tensor>,
    pub bottleneck_features: Tensor,
}

impl ModelOutput {
    fn from_vars(v: &ForwardVars<'_>) -> Self {
        ModelOutput {
            seg_probs: (*v.seg_probs.value()).clone(),
            class_logits: (*v.class_logits.value()).clone(),
            class_probs: (*v.class_probs.value()).clone(),
            attention_maps: v.attention.iter().map(|a| (*a.value()).clone()).collect(),
            bottleneck_features: (*v.bottleneck.value()).clone(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.seg_probs.shape()[0]
    }

    /// Sample `i` as a batch of one.
    pub fn sample(&self, i: usize) -> ModelOutput {
        let one = |t: &Tensor| {
            let mut sh = t.shape().to_vec();
            sh[0] = 1;
            t.index_axis0(i).reshape(&sh)
        };
        ModelOutput {
            seg_probs: one(&self.seg_probs),
            class_logits: one(&self.class_logits),
            class_probs: one(&self.class_probs),
            attention_maps: self.attention_maps.iter().map(one).collect(),
            bottleneck_features: one(&self.bottleneck_features),
        }
    }

    /// Stored gate map, finest when `index` is `None`.
    pub fn attention_map(&self, index: Option<usize>) -> Result<&Tensor, ModelError> {
        let count = self.attention_maps.len();
        let index = index.unwrap_or(count.saturating_sub(1));
        self.attention_maps
            .get(index)
            .ok_or(ModelError::GateIndex { index, count })
    }
}

/// Layer structure; the weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct DualBranchNet {
    pub cnn: CnnBranch,
    pub swin: SwinBranch,
    pub fusion: Vec<FusionBlock>,
    pub decoder: Decoder,
    pub seg_head: SegmentationHead,
    pub cls_head: ClassificationHead,
}

impl DualBranchNet {
    pub fn build(
        cfg: &ModelConfig,
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        let cnn = CnnBranch::new(ps, rng, "cnn", &cfg.cnn);
        let swin = SwinBranch::new(ps, rng, "swin", &cfg.swin);
        let fusion = (0..4)
            .map(|k| {
                FusionBlock::new(
                    ps,
                    rng,
                    &format!("fusion{}", k + 1),
                    cfg.cnn.stage_channels[k],
                    cfg.swin.stage_channels[k],
                    cfg.fusion_widths[k],
                )
            })
            .collect();
        let decoder = Decoder::new(ps, rng, "decoder", &cfg.fusion_widths, &cfg.decoder_widths);
        let seg_head = SegmentationHead::new(ps, rng, "seg_head", cfg.decoder_widths[4]);
        let cls_head = ClassificationHead::new(
            ps,
            rng,
            "cls_head",
            cfg.fusion_widths[3],
            cfg.cls_hidden,
            cfg.num_classes,
        );
        Ok(DualBranchNet {
            cnn,
            swin,
            fusion,
            decoder,
            seg_head,
            cls_head,
        })
    }

    pub fn check_input(x: &[usize]) -> Result<(), ModelError> {
        if x.len() != 4 || x[1] != 3 {
            return Err(ModelError::Channels {
                expected: 3,
                got: x.get(1).copied().unwrap_or(0),
            });
        }
        let (h, w) = (x[2], x[3]);
        if h == 0 || w == 0 || h % MAX_STRIDE != 0 || w % MAX_STRIDE != 0 {
            return Err(ModelError::InputSize { h, w });
        }
        Ok(())
    }

    /// Fused pyramid only (encoder + fusion).
    pub fn encode<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Result<FeaturePyramid<'g>, ModelError> {
        Self::check_input(&x.shape())?;
        let c = self.cnn.forward(ctx, x);
        let s = self.swin.forward(ctx, x);
        let mut fused = Vec::with_capacity(4);
        for k in 0..4 {
            fused.push(self.fusion[k].forward(ctx, c.stages[k], s.stages[k])?);
        }
        Ok(FeaturePyramid {
            stages: [fused[0], fused[1], fused[2], fused[3]],
        })
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Result<ForwardVars<'g>, ModelError> {
        let pyramid = self.encode(ctx, x)?;
        let (d1, attention) = self.decoder.forward(ctx, &pyramid)?;
        let seg_probs = self.seg_head.forward(ctx, d1);
        let bottleneck = pyramid.stages[3];
        let class_logits = self.cls_head.logits(ctx, bottleneck);
        let class_probs = class_logits.softmax_last();
        Ok(ForwardVars {
            seg_probs,
            class_logits,
            class_probs,
            attention,
            bottleneck,
        })
    }
}

/// A network together with its weights.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub net: DualBranchNet,
    pub params: ParamStore,
}

impl Model {
    /// Random initialisation from `config.init_seed`.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let net = DualBranchNet::build(&config, &mut params, &mut rng)?;
        Ok(Model {
            config,
            net,
            params,
        })
    }

    /// Eval-mode forward on a `[N, 3, H, W]` batch without recording
    /// gradients.
    pub fn predict(&self, images: &Tensor) -> Result<ModelOutput, ModelError> {
        let g = Graph::inference();
        let ctx = Ctx::new(&g, &self.params, false);
        let out = self.net.forward(&ctx, g.constant(images.clone()))?;
        Ok(ModelOutput::from_vars(&out))
    }

    /// Like [`Model::predict`] but also returns every window-attention
    /// probability tensor of the transformer branch.
    pub fn predict_with_window_attention(
        &self,
        images: &Tensor,
    ) -> Result<(ModelOutput, Vec<Tensor>), ModelError> {
        let g = Graph::inference();
        let ctx = Ctx::new(&g, &self.params, false).capturing_window_attention();
        let out = self.net.forward(&ctx, g.constant(images.clone()))?;
        Ok((ModelOutput::from_vars(&out), ctx.take_window_attention()))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_trainable()
    }
}
