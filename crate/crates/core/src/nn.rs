//! Parameter storage, forward context and the basic layers.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sonoseg_tensor::{Gradients, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named model state. Trainable entries receive gradients; the rest are
/// buffers such as batch-norm running statistics.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
    trainable: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(Arc::new(value));
        self.trainable.push(trainable);
        ParamId(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|id| self.trainable[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn shared(&self, id: ParamId) -> Arc<Tensor> {
        Arc::clone(&self.values[id.0])
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) {
        assert_eq!(
            value.shape(),
            self.values[id.0].shape(),
            "shape change for {}",
            self.names[id.0]
        );
        self.values[id.0] = Arc::new(value);
    }

    /// In-place access; copies only if the tensor is shared.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.trainable_ids().map(|id| self.get(id).numel()).sum()
    }
}

/// One forward pass: the tape, the parameters it reads and the side
/// channels layers report through.
pub struct Ctx<'g> {
    pub graph: &'g Graph,
    params: &'g ParamStore,
    leaves: RefCell<HashMap<ParamId, Var<'g>>>,
    train: bool,
    bn_updates: RefCell<Vec<(ParamId, Tensor)>>,
    capture_windows: bool,
    window_attention: RefCell<Vec<Tensor>>,
}

impl<'g> Ctx<'g> {
    pub fn new(graph: &'g Graph, params: &'g ParamStore, train: bool) -> Self {
        Ctx {
            graph,
            params,
            leaves: RefCell::new(HashMap::new()),
            train,
            bn_updates: RefCell::new(Vec::new()),
            capture_windows: false,
            window_attention: RefCell::new(Vec::new()),
        }
    }

    /// Also keep every window-attention probability tensor.
    pub fn capturing_window_attention(mut self) -> Self {
        self.capture_windows = true;
        self
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn params(&self) -> &'g ParamStore {
        self.params
    }

    /// The parameter as a graph node; one node per parameter per pass so
    /// gradients accumulate.
    pub fn param(&self, id: ParamId) -> Var<'g> {
        if let Some(v) = self.leaves.borrow().get(&id) {
            return *v;
        }
        let value = self.params.shared(id);
        let v = if self.params.is_trainable(id) {
            self.graph.leaf_shared(value)
        } else {
            self.graph.constant_shared(value)
        };
        self.leaves.borrow_mut().insert(id, v);
        v
    }

    /// Gradients of every trainable parameter, zero for unused ones.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(ParamId, Tensor)> {
        let leaves = self.leaves.borrow();
        self.params
            .trainable_ids()
            .map(|id| {
                let g = leaves
                    .get(&id)
                    .and_then(|v| grads.get(*v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(self.params.get(id).shape()));
                (id, g)
            })
            .collect()
    }

    pub(crate) fn record_buffer(&self, id: ParamId, value: Tensor) {
        self.bn_updates.borrow_mut().push((id, value));
    }

    /// New values for running statistics gathered in training mode.
    pub fn take_buffer_updates(&self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.bn_updates.borrow_mut())
    }

    pub(crate) fn capture_window(&self, probs: &Tensor) {
        if self.capture_windows {
            self.window_attention.borrow_mut().push(probs.clone());
        }
    }

    pub fn take_window_attention(&self) -> Vec<Tensor> {
        std::mem::take(&mut self.window_attention.borrow_mut())
    }
}

pub(crate) fn uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.gen_range(-bound..=bound)).collect(),
    )
}

/// He-uniform bound for a layer feeding a rectifier.
fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let weight = ps.add(
            format!("{name}.weight"),
            uniform(
                &[cout, cin, kernel, kernel],
                he_bound(cin * kernel * kernel),
                rng,
            ),
            true,
        );
        let bias = bias.then(|| ps.add(format!("{name}.bias"), Tensor::zeros(&[cout]), true));
        Conv2d {
            weight,
            bias,
            in_channels: cin,
            out_channels: cout,
            stride,
            pad,
        }
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Var<'g> {
        x.conv2d(
            ctx.param(self.weight),
            self.bias.map(|b| ctx.param(b)),
            self.stride,
            self.pad,
        )
    }
}

/// Transposed convolution with kernel = stride, so every input pixel owns a
/// disjoint `stride x stride` output block.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
}

impl ConvTranspose2d {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Self {
        let weight = ps.add(
            format!("{name}.weight"),
            uniform(&[cin, cout, stride, stride], he_bound(cin), rng),
            true,
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[cout]), true);
        ConvTranspose2d {
            weight,
            bias,
            stride,
        }
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Var<'g> {
        x.conv_transpose2d(
            ctx.param(self.weight),
            Some(ctx.param(self.bias)),
            self.stride,
        )
    }
}

/// Batch normalisation over `[N, C, H, W]`: batch statistics when
/// training (running statistics updated with momentum), stored statistics
/// otherwise.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: ps.add(format!("{name}.gamma"), Tensor::ones(&[channels]), true),
            beta: ps.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            running_mean: ps.add(
                format!("{name}.running_mean"),
                Tensor::zeros(&[channels]),
                false,
            ),
            running_var: ps.add(
                format!("{name}.running_var"),
                Tensor::ones(&[channels]),
                false,
            ),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Var<'g> {
        let sh = x.shape();
        let c = sh[1];
        let bshape = [1, c, 1, 1];
        let (mean, var) = if ctx.is_train() {
            let mean = x.mean_axes(&[0, 2, 3], true);
            let centred = x.sub(mean);
            let var = centred.square().mean_axes(&[0, 2, 3], true);
            let n = (sh[0] * sh[2] * sh[3]) as f64;
            let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let m = self.momentum;
            let rm = ctx.params().get(self.running_mean);
            let rv = ctx.params().get(self.running_var);
            let (bm, bv) = (mean.value(), var.value());
            ctx.record_buffer(
                self.running_mean,
                Tensor::new(
                    &[c],
                    rm.data()
                        .iter()
                        .zip(bm.data())
                        .map(|(r, b)| (1.0 - m) * r + m * b)
                        .collect(),
                ),
            );
            ctx.record_buffer(
                self.running_var,
                Tensor::new(
                    &[c],
                    rv.data()
                        .iter()
                        .zip(bv.data())
                        .map(|(r, b)| (1.0 - m) * r + m * b * unbias)
                        .collect(),
                ),
            );
            (mean, var)
        } else {
            (
                ctx.param(self.running_mean).reshape(&bshape),
                ctx.param(self.running_var).reshape(&bshape),
            )
        };
        let inv = var.add_scalar(self.eps).sqrt();
        let xhat = x.sub(mean).div(inv);
        xhat.mul(ctx.param(self.gamma).reshape(&bshape))
            .add(ctx.param(self.beta).reshape(&bshape))
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        let weight = ps.add(
            format!("{name}.weight"),
            uniform(&[fan_out, fan_in], he_bound(fan_in), rng),
            true,
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]), true);
        Linear { weight, bias }
    }

    /// Glorot-uniform weights, for layers not followed by a rectifier.
    pub fn new_glorot(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = ps.add(
            format!("{name}.weight"),
            uniform(&[fan_out, fan_in], bound, rng),
            true,
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]), true);
        Linear { weight, bias }
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Var<'g> {
        x.linear(ctx.param(self.weight), Some(ctx.param(self.bias)))
    }
}

/// Normalisation over the last axis.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: ps.add(format!("{name}.gamma"), Tensor::ones(&[dim]), true),
            beta: ps.add(format!("{name}.beta"), Tensor::zeros(&[dim]), true),
            eps: 1e-5,
        }
    }

    pub fn forward<'g>(&self, ctx: &Ctx<'g>, x: Var<'g>) -> Var<'g> {
        let last = x.shape().len() - 1;
        let mean = x.mean_axes(&[last], true);
        let centred = x.sub(mean);
        let var = centred.square().mean_axes(&[last], true);
        let xhat = centred.div(var.add_scalar(self.eps).sqrt());
        xhat.mul(ctx.param(self.gamma)).add(ctx.param(self.beta))
    }
}
