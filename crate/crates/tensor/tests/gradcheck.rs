use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonoseg_tensor::{Graph, Tensor, Var};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Checks d(sum(f(inputs) * probe))/d(inputs) against central differences.
fn check(inputs: &[Tensor], f: impl for<'g> Fn(&[Var<'g>]) -> Var<'g>) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let probe = {
        let g = Graph::inference();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&vars).value();
        random(out.shape(), &mut rng)
    };
    let objective = |ins: &[Tensor]| -> f64 {
        let g = Graph::inference();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&vars).value();
        out.data()
            .iter()
            .zip(probe.data())
            .map(|(a, b)| a * b)
            .sum()
    };
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&vars);
    let grads = g.backward_with(out, probe.clone());
    let h = 1e-6;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape()));
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            assert!(
                err < 1e-5,
                "input {k} element {i}: analytic {a} numeric {numeric}"
            );
        }
    }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

#[test]
fn broadcast_binary_ops() {
    let mut r = rng();
    let a = random(&[2, 3, 4], &mut r);
    let b = random(&[3, 1], &mut r);
    check(&[a.clone(), b.clone()], |v| v[0].add(v[1]));
    check(&[a.clone(), b.clone()], |v| v[0].sub(v[1]));
    check(&[a.clone(), b.clone()], |v| v[0].mul(v[1]));
    let pos = b.map(|x| x.abs() + 0.5);
    check(&[a, pos], |v| v[0].div(v[1]));
}

#[test]
fn unary_ops() {
    let mut r = rng();
    let x = random(&[3, 5], &mut r);
    check(std::slice::from_ref(&x), |v| v[0].sigmoid());
    check(std::slice::from_ref(&x), |v| v[0].exp());
    check(std::slice::from_ref(&x), |v| v[0].gelu());
    check(std::slice::from_ref(&x), |v| {
        v[0].square().scale(3.0).add_scalar(1.0)
    });
    check(std::slice::from_ref(&x), |v| v[0].rsub_scalar(2.0).neg());
    let pos = x.map(|v| v.abs() + 0.1);
    check(std::slice::from_ref(&pos), |v| v[0].ln());
    check(&[pos], |v| v[0].sqrt());
    // Keep away from the kinks.
    let away = x.map(|v| if v.abs() < 0.05 { 0.3 } else { v });
    check(std::slice::from_ref(&away), |v| v[0].relu());
    check(&[away], |v| v[0].clamp(-0.5, 0.5));
}

#[test]
fn reductions_and_softmax() {
    let mut r = rng();
    let x = random(&[2, 3, 4], &mut r);
    check(std::slice::from_ref(&x), |v| v[0].sum_axes(&[0, 2], false));
    check(std::slice::from_ref(&x), |v| v[0].mean_axes(&[1], true));
    check(std::slice::from_ref(&x), |v| v[0].sum_all());
    check(&[x], |v| v[0].softmax_last());
}

#[test]
fn shape_ops() {
    let mut r = rng();
    let x = random(&[2, 3, 4], &mut r);
    let y = random(&[2, 2, 4], &mut r);
    check(std::slice::from_ref(&x), |v| v[0].permute(&[2, 0, 1]));
    check(std::slice::from_ref(&x), |v| v[0].reshape(&[6, 4]));
    check(std::slice::from_ref(&x), |v| v[0].narrow(1, 1, 2));
    check(&[x.clone(), y], |v| Var::concat(&[v[0], v[1]], 1));
    let idx: Rc<Vec<isize>> = Rc::new(vec![0, 5, -1, 5, 23, 11]);
    check(&[x], move |v| v[0].gather(Rc::clone(&idx), &[2, 3]));
}

#[test]
fn matmul_and_linear() {
    let mut r = rng();
    let a = random(&[2, 3, 4], &mut r);
    let b = random(&[2, 4, 5], &mut r);
    let shared = random(&[4, 5], &mut r);
    check(&[a.clone(), b], |v| v[0].matmul(v[1]));
    check(&[a.clone(), shared], |v| v[0].matmul(v[1]));
    let w = random(&[6, 4], &mut r);
    let bias = random(&[6], &mut r);
    check(&[a.clone(), w.clone(), bias], |v| {
        v[0].linear(v[1], Some(v[2]))
    });
    check(&[a, w], |v| v[0].linear(v[1], None));
}

#[test]
fn convolutions() {
    let mut r = rng();
    let x = random(&[2, 3, 6, 5], &mut r);
    let w = random(&[4, 3, 3, 3], &mut r);
    let b = random(&[4], &mut r);
    check(&[x.clone(), w.clone(), b.clone()], |v| {
        v[0].conv2d(v[1], Some(v[2]), 1, 1)
    });
    check(&[x.clone(), w, b], |v| v[0].conv2d(v[1], Some(v[2]), 2, 1));
    let wt = random(&[3, 2, 2, 2], &mut r);
    let bt = random(&[2], &mut r);
    check(&[x.clone(), wt, bt], |v| {
        v[0].conv_transpose2d(v[1], Some(v[2]), 2)
    });
    let w1 = random(&[1, 3, 1, 1], &mut r);
    check(&[x, w1], |v| v[0].conv2d(v[1], None, 1, 0));
}

#[test]
fn bilinear_resize() {
    let mut r = rng();
    let x = random(&[1, 2, 3, 4], &mut r);
    check(std::slice::from_ref(&x), |v| v[0].resize_bilinear(7, 5));
    check(&[x], |v| v[0].resize_bilinear(2, 2));
}

#[test]
fn conv_transpose_matches_scatter_definition() {
    // out[o, 2y+a, 2x+b] = sum_c x[c, y, x] w[c, o, a, b]
    let mut r = rng();
    let x = random(&[1, 2, 2, 3], &mut r);
    let w = random(&[2, 3, 2, 2], &mut r);
    let g = Graph::inference();
    let out = g
        .constant(x.clone())
        .conv_transpose2d(g.constant(w.clone()), None, 2)
        .value();
    assert_eq!(out.shape(), &[1, 3, 4, 6]);
    for o in 0..3 {
        for yy in 0..4 {
            for xx in 0..6 {
                let mut expect = 0.0;
                for c in 0..2 {
                    expect += x.get(&[0, c, yy / 2, xx / 2]) * w.get(&[c, o, yy % 2, xx % 2]);
                }
                assert!((out.get(&[0, o, yy, xx]) - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn bilinear_identity_and_constant() {
    let mut r = rng();
    let x = random(&[2, 5, 5], &mut r);
    assert_eq!(x.resize_bilinear(5, 5), x);
    let c = Tensor::full(&[1, 3, 3], 0.7);
    assert!(c
        .resize_bilinear(8, 11)
        .data()
        .iter()
        .all(|v| (v - 0.7).abs() < 1e-12));
}

#[test]
fn gradients_accumulate_over_reuse() {
    let g = Graph::new();
    let x = g.leaf(Tensor::new(&[1], vec![3.0]));
    let y = x.mul(x).add(x).sum_all();
    let grads = g.backward(y);
    assert_eq!(grads.get(x).unwrap().data(), &[7.0]);
}

#[test]
fn inference_graph_records_no_gradients() {
    let g = Graph::inference();
    let x = g.leaf(Tensor::new(&[1], vec![3.0]));
    let y = x.mul(x).sum_all();
    assert!(!y.requires_grad());
    assert!(g.backward(y).get(x).is_none());
}

#[test]
fn retained_intermediate_gradient() {
    let g = Graph::new();
    let x = g.leaf(Tensor::new(&[2], vec![1.0, -2.0]));
    let h = x.scale(2.0);
    g.retain_grad(h);
    let y = h.square().sum_all();
    let grads = g.backward(y);
    assert_eq!(grads.get(h).unwrap().data(), &[4.0, -8.0]);
}
