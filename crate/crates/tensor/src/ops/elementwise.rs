use std::rc::Rc;

use crate::graph::Var;
use crate::tensor::{broadcast_offsets, broadcast_shape, Tensor};

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

impl Binary {
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
            Binary::Div => a / b,
        }
    }
}

/// Offsets of each operand into the broadcast output; `None` when the
/// operand already has the output shape.
struct Layout {
    shape: Vec<usize>,
    a: Option<Rc<Vec<usize>>>,
    b: Option<Rc<Vec<usize>>>,
}

fn layout(a: &[usize], b: &[usize]) -> Layout {
    let shape =
        broadcast_shape(a, b).unwrap_or_else(|| panic!("shapes {a:?} and {b:?} do not broadcast"));
    let offs = |s: &[usize]| (s != shape.as_slice()).then(|| Rc::new(broadcast_offsets(s, &shape)));
    Layout {
        a: offs(a),
        b: offs(b),
        shape,
    }
}

fn at(data: &[f64], offs: &Option<Rc<Vec<usize>>>, i: usize) -> f64 {
    match offs {
        Some(o) => data[o[i]],
        None => data[i],
    }
}

fn reduce_into(shape: &[usize], offs: &Option<Rc<Vec<usize>>>, full: Vec<f64>) -> Tensor {
    match offs {
        None => Tensor::new(shape, full),
        Some(o) => {
            let mut out = Tensor::zeros(shape);
            let d = out.data_mut();
            for (v, &k) in full.iter().zip(o.iter()) {
                d[k] += v;
            }
            out
        }
    }
}

fn binary<'g>(a: Var<'g>, b: Var<'g>, op: Binary) -> Var<'g> {
    assert!(
        std::ptr::eq(a.graph, b.graph),
        "operands on different graphs"
    );
    let av = a.value();
    let bv = b.value();
    let lay = layout(av.shape(), bv.shape());
    let n: usize = lay.shape.iter().product();
    let out: Vec<f64> = if lay.a.is_none() && lay.b.is_none() {
        av.data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| op.apply(x, y))
            .collect()
    } else {
        (0..n)
            .map(|i| op.apply(at(av.data(), &lay.a, i), at(bv.data(), &lay.b, i)))
            .collect()
    };
    let (a_shape, b_shape) = (av.shape().to_vec(), bv.shape().to_vec());
    let Layout {
        shape,
        a: oa,
        b: ob,
    } = lay;
    a.graph
        .push(Tensor::new(&shape, out), &[a, b], move |g, needs| {
            let gd = g.data();
            let (ad, bd) = (av.data(), bv.data());
            let ga = needs[0].then(|| {
                let full: Vec<f64> = match op {
                    Binary::Add | Binary::Sub => gd.to_vec(),
                    Binary::Mul => (0..n).map(|i| gd[i] * at(bd, &ob, i)).collect(),
                    Binary::Div => (0..n).map(|i| gd[i] / at(bd, &ob, i)).collect(),
                };
                reduce_into(&a_shape, &oa, full)
            });
            let gb = needs[1].then(|| {
                let full: Vec<f64> = match op {
                    Binary::Add => gd.to_vec(),
                    Binary::Sub => gd.iter().map(|v| -v).collect(),
                    Binary::Mul => (0..n).map(|i| gd[i] * at(ad, &oa, i)).collect(),
                    Binary::Div => (0..n)
                        .map(|i| {
                            let y = at(bd, &ob, i);
                            -gd[i] * at(ad, &oa, i) / (y * y)
                        })
                        .collect(),
                };
                reduce_into(&b_shape, &ob, full)
            });
            vec![ga, gb]
        })
}

/// Pointwise map with derivative expressed through input and output values.
fn unary<'g>(
    x: Var<'g>,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Var<'g> {
    let xv = x.value();
    let out = xv.map(f);
    let keep = Rc::new(out.clone());
    x.graph.push(out, &[x], move |g, _| {
        let d: Vec<f64> = g
            .data()
            .iter()
            .zip(xv.data())
            .zip(keep.data())
            .map(|((&gv, &xi), &yi)| gv * df(xi, yi))
            .collect();
        vec![Some(Tensor::new(g.shape(), d))]
    })
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[allow(clippy::should_implement_trait)]
impl<'g> Var<'g> {
    pub fn add(self, other: Var<'g>) -> Var<'g> {
        binary(self, other, Binary::Add)
    }

    pub fn sub(self, other: Var<'g>) -> Var<'g> {
        binary(self, other, Binary::Sub)
    }

    pub fn mul(self, other: Var<'g>) -> Var<'g> {
        binary(self, other, Binary::Mul)
    }

    pub fn div(self, other: Var<'g>) -> Var<'g> {
        binary(self, other, Binary::Div)
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn scale(self, factor: f64) -> Var<'g> {
        unary(self, |v| v * factor, move |_, _| factor)
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        unary(self, |v| v + c, |_, _| 1.0)
    }

    /// `c - self`.
    pub fn rsub_scalar(self, c: f64) -> Var<'g> {
        unary(self, |v| c - v, |_, _| -1.0)
    }

    pub fn relu(self) -> Var<'g> {
        unary(self, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(self) -> Var<'g> {
        unary(self, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn exp(self) -> Var<'g> {
        unary(self, f64::exp, |_, y| y)
    }

    pub fn ln(self) -> Var<'g> {
        unary(self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(self) -> Var<'g> {
        unary(self, f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(self) -> Var<'g> {
        unary(self, |v| v * v, |x, _| 2.0 * x)
    }

    /// Tanh approximation of the Gaussian error linear unit.
    pub fn gelu(self) -> Var<'g> {
        unary(
            self,
            |x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044_715 * x * x * x)).tanh()),
            |x, _| {
                let inner = GELU_C * (x + 0.044_715 * x * x * x);
                let t = inner.tanh();
                let dinner = GELU_C * (1.0 + 3.0 * 0.044_715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            },
        )
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'g> {
        unary(
            self,
            move |v| v.clamp(lo, hi),
            move |x, _| if x > lo && x < hi { 1.0 } else { 0.0 },
        )
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
