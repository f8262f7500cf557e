use std::rc::Rc;
use std::sync::Arc;

use crate::graph::Var;
use crate::tensor::{broadcast_offsets, permute_offsets, Tensor};

impl<'g> Var<'g> {
    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        let xv = self.value();
        let in_shape = xv.shape().to_vec();
        let out = (*xv).clone().reshape(shape);
        self.graph.push(out, &[self], move |g, _| {
            vec![Some(g.clone().reshape(&in_shape))]
        })
    }

    pub fn permute(self, axes: &[usize]) -> Var<'g> {
        let xv = self.value();
        let out = xv.permute(axes);
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        self.graph
            .push(out, &[self], move |g, _| vec![Some(g.permute(&inverse))])
    }

    /// `out[i] = self[index[i]]`, or 0 where `index[i]` is negative.
    /// Expresses padding, cropping, rolling, window partitioning and table
    /// lookups with a single scatter-add backward.
    pub fn gather(self, index: Rc<Vec<isize>>, shape: &[usize]) -> Var<'g> {
        let xv = self.value();
        assert_eq!(
            index.len(),
            shape.iter().product::<usize>(),
            "gather index length vs shape {shape:?}"
        );
        let src = xv.data();
        let n = src.len() as isize;
        let data: Vec<f64> = index
            .iter()
            .map(|&i| {
                debug_assert!(i < n);
                if i >= 0 {
                    src[i as usize]
                } else {
                    0.0
                }
            })
            .collect();
        let in_shape = xv.shape().to_vec();
        self.graph
            .push(Tensor::new(shape, data), &[self], move |g, _| {
                let mut gx = Tensor::zeros(&in_shape);
                let d = gx.data_mut();
                for (&i, &v) in index.iter().zip(g.data()) {
                    if i >= 0 {
                        d[i as usize] += v;
                    }
                }
                vec![Some(gx)]
            })
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g> {
        let xv = self.value();
        let out = xv.narrow(axis, start, len);
        let in_shape = xv.shape().to_vec();
        self.graph.push(out, &[self], move |g, _| {
            let outer: usize = in_shape[..axis].iter().product();
            let inner: usize = in_shape[axis + 1..].iter().product();
            let dim = in_shape[axis];
            let mut gx = Tensor::zeros(&in_shape);
            let d = gx.data_mut();
            for o in 0..outer {
                let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                let base = o * dim * inner + start * inner;
                d[base..base + len * inner].copy_from_slice(src);
            }
            vec![Some(gx)]
        })
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'g>], axis: usize) -> Var<'g> {
        assert!(!parts.is_empty());
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let first = values[0].shape().to_vec();
        for v in &values {
            assert_eq!(v.ndim(), first.len());
            for (d, (&a, &b)) in v.shape().iter().zip(&first).enumerate() {
                assert!(
                    d == axis || a == b,
                    "concat extent mismatch {:?} vs {first:?}",
                    v.shape()
                );
            }
        }
        let sizes: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &s) in values.iter().zip(&sizes) {
                data.extend_from_slice(&v.data()[o * s * inner..(o + 1) * s * inner]);
            }
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let graph = parts[0].graph;
        graph.push(Tensor::new(&shape, data), parts, move |g, needs| {
            let mut out = Vec::with_capacity(sizes.len());
            let mut start = 0;
            for (&s, &need) in sizes.iter().zip(needs) {
                out.push(need.then(|| g.narrow(axis, start, s)));
                start += s;
            }
            out
        })
    }

    /// Sum over `axes`; reduced axes are kept with extent 1 when `keepdim`.
    pub fn sum_axes(self, axes: &[usize], keepdim: bool) -> Var<'g> {
        let xv = self.value();
        let in_shape = xv.shape().to_vec();
        let mut kept = in_shape.clone();
        for &a in axes {
            assert!(a < kept.len(), "axis {a} out of range for {in_shape:?}");
            kept[a] = 1;
        }
        let offsets = Rc::new(broadcast_offsets(&kept, &in_shape));
        let mut out = Tensor::zeros(&kept);
        {
            let d = out.data_mut();
            for (v, &o) in xv.data().iter().zip(offsets.iter()) {
                d[o] += v;
            }
        }
        let out_shape: Vec<usize> = if keepdim {
            kept.clone()
        } else {
            in_shape
                .iter()
                .enumerate()
                .filter(|(i, _)| !axes.contains(i))
                .map(|(_, &d)| d)
                .collect()
        };
        let out = out.reshape(&out_shape);
        self.graph.push(out, &[self], move |g, _| {
            let gd = g.data();
            let data: Vec<f64> = offsets.iter().map(|&o| gd[o]).collect();
            vec![Some(Tensor::new(&in_shape, data))]
        })
    }

    pub fn mean_axes(self, axes: &[usize], keepdim: bool) -> Var<'g> {
        let shape = self.shape();
        let count: usize = axes.iter().map(|&a| shape[a]).product();
        self.sum_axes(axes, keepdim).scale(1.0 / count as f64)
    }

    pub fn sum_all(self) -> Var<'g> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        self.sum_axes(&axes, false)
    }

    pub fn mean_all(self) -> Var<'g> {
        let n = self.value().numel();
        self.sum_all().scale(1.0 / n as f64)
    }

    /// Softmax over the last axis.
    pub fn softmax_last(self) -> Var<'g> {
        let xv = self.value();
        let shape = xv.shape().to_vec();
        let last = *shape.last().expect("softmax of a scalar");
        let mut out = Vec::with_capacity(xv.numel());
        for row in xv.data().chunks(last) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            out.extend(e.into_iter().map(|v| v / s));
        }
        let y = Arc::new(Tensor::new(&shape, out));
        let keep = Arc::clone(&y);
        self.graph.push((*y).clone(), &[self], move |g, _| {
            let mut gx = Vec::with_capacity(g.numel());
            for (gr, yr) in g.data().chunks(last).zip(keep.data().chunks(last)) {
                let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                gx.extend(gr.iter().zip(yr).map(|(gv, yv)| yv * (gv - dot)));
            }
            vec![Some(Tensor::new(keep.shape(), gx))]
        })
    }
}

/// Flat source offsets realising `x.permute(axes)`; exposed for callers that
/// compose permutations into a single gather.
pub fn permutation_index(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    permute_offsets(shape, axes)
}
