use std::rc::Rc;

use crate::graph::Var;
use crate::tensor::Tensor;

/// Source taps `(lo, hi, frac)` for bilinear resampling of one axis with
/// half-pixel centres: `src = (dst + 0.5) * in / out - 0.5`, clamped at 0.
pub fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

fn resize_planes(
    data: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    ty: &[(usize, usize, f64)],
    tx: &[(usize, usize, f64)],
) -> Vec<f64> {
    let (oh, ow) = (ty.len(), tx.len());
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &data[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

impl Tensor {
    /// Bilinear resize of the two trailing axes.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Tensor {
        let sh = self.shape();
        assert!(sh.len() >= 2, "resize needs at least 2 axes");
        let (h, w) = (sh[sh.len() - 2], sh[sh.len() - 1]);
        assert!(
            h > 0 && w > 0 && out_h > 0 && out_w > 0,
            "degenerate resize {sh:?} -> {out_h}x{out_w}"
        );
        let planes = self.numel() / (h * w);
        let data = resize_planes(
            self.data(),
            planes,
            h,
            w,
            &bilinear_taps(h, out_h),
            &bilinear_taps(w, out_w),
        );
        let mut shape = sh[..sh.len() - 2].to_vec();
        shape.extend([out_h, out_w]);
        Tensor::new(&shape, data)
    }
}

impl<'g> Var<'g> {
    /// Differentiable bilinear resize of the two trailing axes.
    pub fn resize_bilinear(self, out_h: usize, out_w: usize) -> Var<'g> {
        let xv = self.value();
        let sh = xv.shape().to_vec();
        let (h, w) = (sh[sh.len() - 2], sh[sh.len() - 1]);
        if (h, w) == (out_h, out_w) {
            return self;
        }
        let out = xv.resize_bilinear(out_h, out_w);
        let ty = Rc::new(bilinear_taps(h, out_h));
        let tx = Rc::new(bilinear_taps(w, out_w));
        let planes = xv.numel() / (h * w);
        self.graph.push(out, &[self], move |g, _| {
            let mut gx = vec![0.0; planes * h * w];
            let gd = g.data();
            for p in 0..planes {
                let src = &gd[p * out_h * out_w..(p + 1) * out_h * out_w];
                let dst = &mut gx[p * h * w..(p + 1) * h * w];
                for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                    for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                        let v = src[oy * out_w + ox];
                        dst[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                        dst[y0 * w + x1] += v * (1.0 - fy) * fx;
                        dst[y1 * w + x0] += v * fy * (1.0 - fx);
                        dst[y1 * w + x1] += v * fy * fx;
                    }
                }
            }
            vec![Some(Tensor::new(&sh, gx))]
        })
    }
}
