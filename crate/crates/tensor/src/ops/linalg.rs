use crate::graph::Var;
use crate::tensor::Tensor;

/// Strided view of a row-major matrix inside a slice.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols);
        Mat {
            data,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Mat {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// `c = alpha * a * b + beta * c`, `c` row-major `a.rows x b.cols`.
pub(crate) fn gemm(a: Mat<'_>, b: Mat<'_>, c: &mut [f64], alpha: f64, beta: f64) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    // SAFETY: bounds were checked above for every accessed element: `a` and
    // `b` views come from `Mat::new`/`t` over slices of at least rows*cols
    // elements and `c` holds m*n values.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'g> Var<'g> {
    /// Batched matrix product `[.., m, k] x [.., k, n]`. The right operand
    /// may be a plain `[k, n]` matrix shared across the batch.
    pub fn matmul(self, other: Var<'g>) -> Var<'g> {
        let av = self.value();
        let bv = other.value();
        let (ash, bsh) = (av.shape().to_vec(), bv.shape().to_vec());
        assert!(
            ash.len() >= 2 && bsh.len() >= 2,
            "matmul needs matrices, got {ash:?} x {bsh:?}"
        );
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (k2, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        assert_eq!(k, k2, "matmul inner mismatch {ash:?} x {bsh:?}");
        let batch: usize = ash[..ash.len() - 2].iter().product();
        let shared = bsh.len() == 2;
        if !shared {
            assert_eq!(
                &ash[..ash.len() - 2],
                &bsh[..bsh.len() - 2],
                "matmul batch mismatch"
            );
        }
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            let a = Mat::new(&av.data()[i * m * k..], m, k);
            let boff = if shared { 0 } else { i * k * n };
            let b = Mat::new(&bv.data()[boff..], k, n);
            gemm(a, b, &mut out[i * m * n..(i + 1) * m * n], 1.0, 0.0);
        }
        let mut shape = ash[..ash.len() - 2].to_vec();
        shape.extend([m, n]);
        self.graph
            .push(Tensor::new(&shape, out), &[self, other], move |g, needs| {
                let gd = g.data();
                let ga = needs[0].then(|| {
                    let mut ga = vec![0.0; batch * m * k];
                    for i in 0..batch {
                        let gm = Mat::new(&gd[i * m * n..], m, n);
                        let boff = if shared { 0 } else { i * k * n };
                        let b = Mat::new(&bv.data()[boff..], k, n);
                        gemm(gm, b.t(), &mut ga[i * m * k..(i + 1) * m * k], 1.0, 0.0);
                    }
                    Tensor::new(&ash, ga)
                });
                let gb = needs[1].then(|| {
                    let mut gb = vec![0.0; bv.numel()];
                    for i in 0..batch {
                        let gm = Mat::new(&gd[i * m * n..], m, n);
                        let a = Mat::new(&av.data()[i * m * k..], m, k);
                        if shared {
                            gemm(a.t(), gm, &mut gb, 1.0, 1.0);
                        } else {
                            gemm(a.t(), gm, &mut gb[i * k * n..(i + 1) * k * n], 1.0, 0.0);
                        }
                    }
                    Tensor::new(&bsh, gb)
                });
                vec![ga, gb]
            })
    }

    /// Affine map over the last axis: `x [.., in] -> [.., out]` with weight
    /// `[out, in]` and optional bias `[out]`.
    pub fn linear(self, weight: Var<'g>, bias: Option<Var<'g>>) -> Var<'g> {
        let xv = self.value();
        let wv = weight.value();
        let xsh = xv.shape().to_vec();
        let (out_f, in_f) = (wv.shape()[0], wv.shape()[1]);
        assert_eq!(wv.ndim(), 2);
        assert_eq!(
            *xsh.last().unwrap(),
            in_f,
            "linear input width {xsh:?} vs weight {:?}",
            wv.shape()
        );
        let rows = xv.numel() / in_f;
        let mut out = vec![0.0; rows * out_f];
        if let Some(b) = &bias {
            let bv = b.value();
            assert_eq!(bv.shape(), &[out_f]);
            for r in 0..rows {
                out[r * out_f..(r + 1) * out_f].copy_from_slice(bv.data());
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        gemm(
            Mat::new(xv.data(), rows, in_f),
            Mat::new(wv.data(), out_f, in_f).t(),
            &mut out,
            1.0,
            beta,
        );
        let mut shape = xsh.clone();
        *shape.last_mut().unwrap() = out_f;
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        self.graph
            .push(Tensor::new(&shape, out), &parents, move |g, needs| {
                let gm = Mat::new(g.data(), rows, out_f);
                let gx = needs[0].then(|| {
                    let mut gx = vec![0.0; rows * in_f];
                    gemm(gm, Mat::new(wv.data(), out_f, in_f), &mut gx, 1.0, 0.0);
                    Tensor::new(&xsh, gx)
                });
                let gw = needs[1].then(|| {
                    let mut gw = vec![0.0; out_f * in_f];
                    gemm(gm.t(), Mat::new(xv.data(), rows, in_f), &mut gw, 1.0, 0.0);
                    Tensor::new(&[out_f, in_f], gw)
                });
                let mut res = vec![gx, gw];
                if has_bias {
                    res.push(needs[2].then(|| {
                        let mut gb = vec![0.0; out_f];
                        for row in g.data().chunks(out_f) {
                            for (a, b) in gb.iter_mut().zip(row) {
                                *a += b;
                            }
                        }
                        Tensor::new(&[out_f], gb)
                    }));
                }
                res
            })
    }
}
