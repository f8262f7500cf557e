use rayon::prelude::*;

use crate::graph::Var;
use crate::ops::linalg::{gemm, Mat};
use crate::tensor::Tensor;

/// Per-sample (input, weight) gradient contributions.
type SampleGrads = (Option<Vec<f64>>, Option<Vec<f64>>);

#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfold `x [C, H, W]` into `[C*kh*kw, oh*ow]`.
fn im2col(x: &[f64], geo: &Geometry) -> Vec<f64> {
    let Geometry {
        channels,
        h,
        w,
        kh,
        kw,
        stride,
        pad,
        oh,
        ow,
    } = *geo;
    let mut cols = vec![0.0; geo.col_rows() * geo.col_cols()];
    for c in 0..channels {
        for i in 0..kh {
            for j in 0..kw {
                let row = (c * kh + i) * kw + j;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let y = (oy * stride + i) as isize - pad as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let src = &x[(c * h + y as usize) * w..(c * h + y as usize + 1) * w];
                    for ox in 0..ow {
                        let xx = (ox * stride + j) as isize - pad as isize;
                        if xx >= 0 && xx < w as isize {
                            dst[oy * ow + ox] = src[xx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulate columns back into `[C, H, W]`.
fn col2im(cols: &[f64], geo: &Geometry) -> Vec<f64> {
    let Geometry {
        channels,
        h,
        w,
        kh,
        kw,
        stride,
        pad,
        oh,
        ow,
    } = *geo;
    let mut x = vec![0.0; channels * h * w];
    for c in 0..channels {
        for i in 0..kh {
            for j in 0..kw {
                let row = (c * kh + i) * kw + j;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let y = (oy * stride + i) as isize - pad as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let dst = &mut x[(c * h + y as usize) * w..(c * h + y as usize + 1) * w];
                    for ox in 0..ow {
                        let xx = (ox * stride + j) as isize - pad as isize;
                        if xx >= 0 && xx < w as isize {
                            dst[xx as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

fn add_channel_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (o, b) in bias.iter().enumerate() {
        for v in &mut out[o * plane..(o + 1) * plane] {
            *v += b;
        }
    }
}

fn channel_sums(g: &Tensor) -> Tensor {
    let sh = g.shape();
    let (n, c, plane) = (sh[0], sh[1], sh[2] * sh[3]);
    let mut out = vec![0.0; c];
    for s in 0..n {
        for (ch, acc) in out.iter_mut().enumerate() {
            let base = (s * c + ch) * plane;
            *acc += g.data()[base..base + plane].iter().sum::<f64>();
        }
    }
    Tensor::new(&[c], out)
}

/// Sum of per-sample partial results in sample order.
fn ordered_sum(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in parts {
        for (a, b) in acc.iter_mut().zip(p) {
            *a += b;
        }
    }
    acc
}

impl<'g> Var<'g> {
    /// 2-D cross-correlation, `x [N, C, H, W]`, `weight [O, C, kh, kw]`.
    pub fn conv2d(
        self,
        weight: Var<'g>,
        bias: Option<Var<'g>>,
        stride: usize,
        pad: usize,
    ) -> Var<'g> {
        let xv = self.value();
        let wv = weight.value();
        let (xs, ws) = (xv.shape().to_vec(), wv.shape().to_vec());
        assert_eq!(xs.len(), 4, "conv2d input must be NCHW, got {xs:?}");
        assert_eq!(ws.len(), 4, "conv2d weight must be OCkk, got {ws:?}");
        assert_eq!(
            xs[1], ws[1],
            "conv2d channel mismatch: input {xs:?}, weight {ws:?}"
        );
        assert!(stride > 0);
        let (n, out_c) = (xs[0], ws[0]);
        let (kh, kw) = (ws[2], ws[3]);
        assert!(
            xs[2] + 2 * pad >= kh && xs[3] + 2 * pad >= kw,
            "conv2d kernel larger than input {xs:?}"
        );
        let geo = Geometry {
            channels: xs[1],
            h: xs[2],
            w: xs[3],
            kh,
            kw,
            stride,
            pad,
            oh: (xs[2] + 2 * pad - kh) / stride + 1,
            ow: (xs[3] + 2 * pad - kw) / stride + 1,
        };
        let in_len = geo.channels * geo.h * geo.w;
        let out_len = out_c * geo.col_cols();
        let bias_v = bias.map(|b| b.value());
        let mut out = vec![0.0; n * out_len];
        let (xd, wd) = (xv.data(), wv.data());
        let bd = bias_v.as_ref().map(|b| b.data());
        out.par_chunks_mut(out_len.max(1))
            .enumerate()
            .for_each(|(s, dst)| {
                let cols = im2col(&xd[s * in_len..(s + 1) * in_len], &geo);
                gemm(
                    Mat::new(wd, out_c, geo.col_rows()),
                    Mat::new(&cols, geo.col_rows(), geo.col_cols()),
                    dst,
                    1.0,
                    0.0,
                );
                if let Some(b) = bd {
                    add_channel_bias(dst, b, geo.col_cols());
                }
            });
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        let shape = [n, out_c, geo.oh, geo.ow];
        self.graph
            .push(Tensor::new(&shape, out), &parents, move |g, needs| {
                let gd = g.data();
                let xd = xv.data();
                let wm = Mat::new(wv.data(), out_c, geo.col_rows());
                let per_sample: Vec<SampleGrads> = (0..n)
                    .into_par_iter()
                    .map(|s| {
                        let gm =
                            Mat::new(&gd[s * out_len..(s + 1) * out_len], out_c, geo.col_cols());
                        let gx = needs[0].then(|| {
                            let mut gcols = vec![0.0; geo.col_rows() * geo.col_cols()];
                            gemm(wm.t(), gm, &mut gcols, 1.0, 0.0);
                            col2im(&gcols, &geo)
                        });
                        let gw = needs[1].then(|| {
                            let cols = im2col(&xd[s * in_len..(s + 1) * in_len], &geo);
                            let mut gw = vec![0.0; out_c * geo.col_rows()];
                            gemm(
                                gm,
                                Mat::new(&cols, geo.col_rows(), geo.col_cols()).t(),
                                &mut gw,
                                1.0,
                                0.0,
                            );
                            gw
                        });
                        (gx, gw)
                    })
                    .collect();
                let (gxs, gws): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
                let gx = needs[0]
                    .then(|| Tensor::new(&xs, gxs.into_iter().flatten().flatten().collect()));
                let gw = needs[1].then(|| {
                    Tensor::new(
                        &ws,
                        ordered_sum(gws.into_iter().flatten().collect(), wv.numel()),
                    )
                });
                let mut res = vec![gx, gw];
                if has_bias {
                    res.push(needs[2].then(|| channel_sums(g)));
                }
                res
            })
    }

    /// Transposed convolution without padding, `x [N, C, H, W]`,
    /// `weight [C, O, k, k]`; output extent `(H - 1) * stride + k`.
    pub fn conv_transpose2d(
        self,
        weight: Var<'g>,
        bias: Option<Var<'g>>,
        stride: usize,
    ) -> Var<'g> {
        let xv = self.value();
        let wv = weight.value();
        let (xs, ws) = (xv.shape().to_vec(), wv.shape().to_vec());
        assert_eq!(
            xs.len(),
            4,
            "conv_transpose2d input must be NCHW, got {xs:?}"
        );
        assert_eq!(ws.len(), 4);
        assert_eq!(
            xs[1], ws[0],
            "conv_transpose2d channel mismatch: input {xs:?}, weight {ws:?}"
        );
        let (n, in_c, out_c) = (xs[0], xs[1], ws[1]);
        let (kh, kw) = (ws[2], ws[3]);
        let (h, w) = (xs[2], xs[3]);
        // Output geometry seen from the equivalent forward convolution.
        let geo = Geometry {
            channels: out_c,
            h: (h - 1) * stride + kh,
            w: (w - 1) * stride + kw,
            kh,
            kw,
            stride,
            pad: 0,
            oh: h,
            ow: w,
        };
        let in_len = in_c * h * w;
        let out_len = out_c * geo.h * geo.w;
        let wm = Mat::new(wv.data(), in_c, geo.col_rows());
        let bias_v = bias.map(|b| b.value());
        let mut out = vec![0.0; n * out_len];
        let xd = xv.data();
        let bd = bias_v.as_ref().map(|b| b.data());
        out.par_chunks_mut(out_len.max(1))
            .enumerate()
            .for_each(|(s, dst)| {
                let mut cols = vec![0.0; geo.col_rows() * geo.col_cols()];
                gemm(
                    wm.t(),
                    Mat::new(&xd[s * in_len..(s + 1) * in_len], in_c, h * w),
                    &mut cols,
                    1.0,
                    0.0,
                );
                dst.copy_from_slice(&col2im(&cols, &geo));
                if let Some(b) = bd {
                    add_channel_bias(dst, b, geo.h * geo.w);
                }
            });
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        let shape = [n, out_c, geo.h, geo.w];
        self.graph
            .push(Tensor::new(&shape, out), &parents, move |g, needs| {
                let gd = g.data();
                let xd = xv.data();
                let wm = Mat::new(wv.data(), in_c, geo.col_rows());
                let per_sample: Vec<SampleGrads> = (0..n)
                    .into_par_iter()
                    .map(|s| {
                        let gcols = im2col(&gd[s * out_len..(s + 1) * out_len], &geo);
                        let gc = Mat::new(&gcols, geo.col_rows(), geo.col_cols());
                        let gx = needs[0].then(|| {
                            let mut gx = vec![0.0; in_len];
                            gemm(wm, gc, &mut gx, 1.0, 0.0);
                            gx
                        });
                        let gw = needs[1].then(|| {
                            let mut gw = vec![0.0; in_c * geo.col_rows()];
                            gemm(
                                Mat::new(&xd[s * in_len..(s + 1) * in_len], in_c, h * w),
                                gc.t(),
                                &mut gw,
                                1.0,
                                0.0,
                            );
                            gw
                        });
                        (gx, gw)
                    })
                    .collect();
                let (gxs, gws): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
                let gx = needs[0]
                    .then(|| Tensor::new(&xs, gxs.into_iter().flatten().flatten().collect()));
                let gw = needs[1].then(|| {
                    Tensor::new(
                        &ws,
                        ordered_sum(gws.into_iter().flatten().collect(), wv.numel()),
                    )
                });
                let mut res = vec![gx, gw];
                if has_bias {
                    res.push(needs[2].then(|| channel_sums(g)));
                }
                res
            })
    }
}
