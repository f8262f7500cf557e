use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use sonoseg_tensor::{Tensor, Var};

use super::{BackboneSpec, FeaturePyramid};
use crate::nn::{uniform, Conv2d, Ctx, LayerNorm, Linear, ParamId, ParamStore};

const MASK_VALUE: f64 = -100.0;

/// Window geometry for one block on an `h x w` token grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Windows {
    h: usize,
    w: usize,
    ws: usize,
    shift: usize,
    hp: usize,
    wp: usize,
}

impl Windows {
    /// Windows never exceed the grid; a grid no larger than the window gets
    /// a single unshifted window. Otherwise the grid is zero-padded up to a
    /// multiple of the window.
    fn new(h: usize, w: usize, window: usize, shifted: bool) -> Self {
        let (ws, shift) = if h.min(w) <= window {
            (h.min(w), 0)
        } else {
            (window, if shifted { window / 2 } else { 0 })
        };
        Windows {
            h,
            w,
            ws,
            shift,
            hp: h.div_ceil(ws) * ws,
            wp: w.div_ceil(ws) * ws,
        }
    }

    fn count(&self) -> usize {
        (self.hp / self.ws) * (self.wp / self.ws)
    }

    fn tokens(&self) -> usize {
        self.ws * self.ws
    }

    /// Padded-grid coordinate held at rolled position `(py, px)`.
    fn source(&self, py: usize, px: usize) -> (usize, usize) {
        ((py + self.shift) % self.hp, (px + self.shift) % self.wp)
    }

    /// `(window, token)` of rolled position `(py, px)`.
    fn slot(&self, py: usize, px: usize) -> (usize, usize) {
        let nwx = self.wp / self.ws;
        (
            (py / self.ws) * nwx + px / self.ws,
            (py % self.ws) * self.ws + px % self.ws,
        )
    }

    /// `[n, h, w, c]` -> `[n * windows, tokens, c]`; padding reads as 0.
    fn partition_index(&self, n: usize, c: usize) -> Vec<isize> {
        let (nw, t) = (self.count(), self.tokens());
        let mut idx = vec![-1isize; n * nw * t * c];
        for b in 0..n {
            for py in 0..self.hp {
                for px in 0..self.wp {
                    let (sy, sx) = self.source(py, px);
                    if sy >= self.h || sx >= self.w {
                        continue;
                    }
                    let (win, tok) = self.slot(py, px);
                    let dst = ((b * nw + win) * t + tok) * c;
                    let src = ((b * self.h + sy) * self.w + sx) * c;
                    for ch in 0..c {
                        idx[dst + ch] = (src + ch) as isize;
                    }
                }
            }
        }
        idx
    }

    /// Inverse of [`Windows::partition_index`] on the unpadded tokens.
    fn reverse_index(&self, n: usize, c: usize) -> Vec<isize> {
        let (nw, t) = (self.count(), self.tokens());
        let mut idx = Vec::with_capacity(n * self.h * self.w * c);
        for b in 0..n {
            for y in 0..self.h {
                for x in 0..self.w {
                    let py = (y + self.hp - self.shift) % self.hp;
                    let px = (x + self.wp - self.shift) % self.wp;
                    let (win, tok) = self.slot(py, px);
                    let base = ((b * nw + win) * t + tok) * c;
                    idx.extend((0..c).map(|ch| (base + ch) as isize));
                }
            }
        }
        idx
    }

    /// Additive `[windows, 1, T, T]` mask, or `None` when every window is
    /// a contiguous unpadded patch.
    fn mask(&self) -> Option<Tensor> {
        if self.shift == 0 && self.hp == self.h && self.wp == self.w {
            return None;
        }
        let (nw, t) = (self.count(), self.tokens());
        // Region labels on the rolled grid: tokens that were not neighbours
        // before the roll must not attend to each other.
        let band = |p: usize, len: usize| {
            if self.shift == 0 || p < len - self.ws {
                0
            } else if p < len - self.shift {
                1
            } else {
                2
            }
        };
        let mut region = vec![0usize; nw * t];
        let mut valid = vec![false; nw * t];
        for py in 0..self.hp {
            for px in 0..self.wp {
                let (win, tok) = self.slot(py, px);
                region[win * t + tok] = band(py, self.hp) * 3 + band(px, self.wp);
                let (sy, sx) = self.source(py, px);
                valid[win * t + tok] = sy < self.h && sx < self.w;
            }
        }
        let mut data = vec![0.0; nw * t * t];
        for win in 0..nw {
            for i in 0..t {
                for j in 0..t {
                    let (a, b) = (win * t + i, win * t + j);
                    if region[a] != region[b] || !valid[b] {
                        data[(win * t + i) * t + j] = MASK_VALUE;
                    }
                }
            }
        }
        Some(Tensor::new(&[nw, 1, t, t], data))
    }
}

/// The additive attention mask used on an `h x w` grid, `[windows, 1, T, T]`.
pub fn window_attention_mask(h: usize, w: usize, window: usize, shifted: bool) -> Option<Tensor> {
    Windows::new(h, w, window, shifted).mask()
}

/// Gather index from a `[heads, (2W-1)^2]`-position table into the
/// `[heads, T, T]` bias of a `ws x ws` window.
fn relative_index(ws: usize, table_window: usize, heads: usize) -> Vec<isize> {
    let t = ws * ws;
    let span = 2 * table_window - 1;
    let mut idx = Vec::with_capacity(heads * t * t);
    for hd in 0..heads {
        for i in 0..t {
            for j in 0..t {
                let dy = (i / ws) as isize - (j / ws) as isize + table_window as isize - 1;
                let dx = (i % ws) as isize - (j % ws) as isize + table_window as isize - 1;
                idx.push((dy * span as isize + dx) * heads as isize + hd as isize);
            }
        }
    }
    idx
}

#[derive(Clone, Debug)]
pub struct WindowAttention {
    pub qkv: Linear,
    pub proj: Linear,
    /// `[(2W-1)^2, heads]` relative position bias.
    pub bias_table: ParamId,
    pub heads: usize,
    pub window: usize,
}

impl WindowAttention {
    fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        dim: usize,
        heads: usize,
        window: usize,
    ) -> Self {
        let span = 2 * window - 1;
        WindowAttention {
            qkv: Linear::new_glorot(ps, rng, &format!("{name}.qkv"), dim, 3 * dim),
            proj: Linear::new_glorot(ps, rng, &format!("{name}.proj"), dim, dim),
            bias_table: ps.add(
                format!("{name}.relative_bias"),
                uniform(&[span * span, heads], 0.02, rng),
                true,
            ),
            heads,
            window,
        }
    }

    /// `x [n, h, w, c]` -> `[n, h, w, c]`.
    fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>, geo: &Windows) -> Var<'g> {
        let sh = x.shape();
        let (n, c) = (sh[0], sh[3]);
        let (nw, t, heads) = (geo.count(), geo.tokens(), self.heads);
        let d = c / heads;
        let bw = n * nw;

        let windows = x.gather(Rc::new(geo.partition_index(n, c)), &[bw, t, c]);
        let qkv = self
            .qkv
            .forward(ctx, windows)
            .reshape(&[bw, t, 3, heads, d])
            .permute(&[2, 0, 3, 1, 4]);
        let part = |i: usize| qkv.narrow(0, i, 1).reshape(&[bw, heads, t, d]);
        let (q, k, v) = (part(0), part(1), part(2));

        let mut attn = q
            .scale(1.0 / (d as f64).sqrt())
            .matmul(k.permute(&[0, 1, 3, 2]));
        let bias = ctx.param(self.bias_table).gather(
            Rc::new(relative_index(geo.ws, self.window, heads)),
            &[heads, t, t],
        );
        attn = attn.add(bias);
        if let Some(mask) = geo.mask() {
            attn = attn
                .reshape(&[n, nw, heads, t, t])
                .add(ctx.graph.constant(mask))
                .reshape(&[bw, heads, t, t]);
        }
        let probs = attn.softmax_last();
        ctx.capture_window(&probs.value());
        let out = probs.matmul(v).permute(&[0, 2, 1, 3]).reshape(&[bw, t, c]);
        let out = self.proj.forward(ctx, out);
        out.gather(Rc::new(geo.reverse_index(n, c)), &[n, geo.h, geo.w, c])
    }
}

#[derive(Clone, Debug)]
pub struct SwinBlock {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub shifted: bool,
}

impl SwinBlock {
    fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Var<'g> {
        let sh = x.shape();
        let geo = Windows::new(sh[1], sh[2], self.attn.window, self.shifted);
        let x = x.add(self.attn.forward(ctx, self.norm1.forward(ctx, x), &geo));
        let hidden = self.fc1.forward(ctx, self.norm2.forward(ctx, x)).gelu();
        x.add(self.fc2.forward(ctx, hidden))
    }
}

/// 2x2 neighbourhood concatenation, normalisation and a bias-free linear
/// reduction `4 C_in -> C_out`.
#[derive(Clone, Debug)]
pub struct PatchMerging {
    pub norm: LayerNorm,
    pub reduction: ParamId,
}

impl PatchMerging {
    fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Var<'g> {
        let sh = x.shape();
        let (n, h, w, c) = (sh[0], sh[1], sh[2], sh[3]);
        assert!(
            h % 2 == 0 && w % 2 == 0,
            "patch merging needs an even grid, got {h}x{w}"
        );
        let (oh, ow) = (h / 2, w / 2);
        let mut idx = Vec::with_capacity(n * oh * ow * 4 * c);
        for b in 0..n {
            for y in 0..oh {
                for xx in 0..ow {
                    for (dy, dx) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        let src = ((b * h + 2 * y + dy) * w + 2 * xx + dx) * c;
                        idx.extend((0..c).map(|ch| (src + ch) as isize));
                    }
                }
            }
        }
        let merged = x.gather(Rc::new(idx), &[n, oh, ow, 4 * c]);
        self.norm
            .forward(ctx, merged)
            .linear(ctx.param(self.reduction), None)
    }
}

#[derive(Clone, Debug)]
pub struct SwinStage {
    pub merge: Option<PatchMerging>,
    pub blocks: Vec<SwinBlock>,
    pub out_norm: LayerNorm,
}

/// Hierarchical shifted-window transformer: stride-4 patch embedding, then
/// four stages of alternating regular/shifted window blocks with patch
/// merging between stages.
#[derive(Clone, Debug)]
pub struct SwinBranch {
    pub patch_embed: Conv2d,
    pub embed_norm: LayerNorm,
    pub stages: Vec<SwinStage>,
}

impl SwinBranch {
    pub fn new(ps: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, spec: &BackboneSpec) -> Self {
        let ch = spec.stage_channels;
        let patch_embed = Conv2d::new(
            ps,
            rng,
            &format!("{name}.patch_embed"),
            3,
            ch[0],
            4,
            4,
            0,
            true,
        );
        let embed_norm = LayerNorm::new(ps, &format!("{name}.embed_norm"), ch[0]);
        let mut stages = Vec::with_capacity(4);
        for k in 0..4 {
            let sname = format!("{name}.stage{}", k + 1);
            let merge = (k > 0).then(|| {
                let cin = ch[k - 1];
                let bound = (6.0 / (4 * cin + ch[k]) as f64).sqrt();
                PatchMerging {
                    norm: LayerNorm::new(ps, &format!("{sname}.merge.norm"), 4 * cin),
                    reduction: ps.add(
                        format!("{sname}.merge.reduction"),
                        uniform(&[ch[k], 4 * cin], bound, rng),
                        true,
                    ),
                }
            });
            let dim = ch[k];
            let hidden = dim * spec.mlp_ratio;
            let blocks = (0..spec.depths[k])
                .map(|b| {
                    let bname = format!("{sname}.block{b}");
                    SwinBlock {
                        norm1: LayerNorm::new(ps, &format!("{bname}.norm1"), dim),
                        attn: WindowAttention::new(
                            ps,
                            rng,
                            &format!("{bname}.attn"),
                            dim,
                            spec.heads[k],
                            spec.window,
                        ),
                        norm2: LayerNorm::new(ps, &format!("{bname}.norm2"), dim),
                        fc1: Linear::new(ps, rng, &format!("{bname}.fc1"), dim, hidden),
                        fc2: Linear::new_glorot(ps, rng, &format!("{bname}.fc2"), hidden, dim),
                        shifted: b % 2 == 1,
                    }
                })
                .collect();
            let out_norm = LayerNorm::new(ps, &format!("{sname}.out_norm"), dim);
            stages.push(SwinStage {
                merge,
                blocks,
                out_norm,
            });
        }
        SwinBranch {
            patch_embed,
            embed_norm,
            stages,
        }
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> FeaturePyramid<'g> {
        let mut h = self
            .embed_norm
            .forward(ctx, self.patch_embed.forward(ctx, x).permute(&[0, 2, 3, 1]));
        let mut out = Vec::with_capacity(4);
        for stage in &self.stages {
            if let Some(m) = &stage.merge {
                h = m.forward(ctx, h);
            }
            for block in &stage.blocks {
                h = block.forward(ctx, h);
            }
            out.push(stage.out_norm.forward(ctx, h).permute(&[0, 3, 1, 2]));
        }
        FeaturePyramid {
            stages: [out[0], out[1], out[2], out[3]],
        }
    }
}
