use std::cell::RefCell;
use std::collections::HashSet;
use std::sync::Arc;

use crate::tensor::Tensor;

/// Computes the gradient contribution for each parent from the gradient of
/// the node's output. `needs[i]` is false for parents that do not need one.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Arc<Tensor>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

/// A recording tape. Every operation on a [`Var`] appends a node; nodes are
/// created in topological order so the reverse sweep is a plain reverse scan.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    retained: RefCell<HashSet<usize>>,
    grad_enabled: bool,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    pub(crate) graph: &'g Graph,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// A tape that records backward closures.
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            retained: RefCell::new(HashSet::new()),
            grad_enabled: true,
        }
    }

    /// A tape that never records backward closures (inference).
    pub fn inference() -> Self {
        Graph {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input that does not require gradients.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(Arc::new(value), false)
    }

    /// Leaf whose gradient is kept by [`Graph::backward`].
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(Arc::new(value), self.grad_enabled)
    }

    pub fn constant_shared(&self, value: Arc<Tensor>) -> Var<'_> {
        self.push_leaf(value, false)
    }

    pub fn leaf_shared(&self, value: Arc<Tensor>) -> Var<'_> {
        self.push_leaf(value, self.grad_enabled)
    }

    fn push_leaf(&self, value: Arc<Tensor>, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            parents: Vec::new(),
            backward: None,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn push<'g>(
        &'g self,
        value: Tensor,
        parents: &[Var<'g>],
        backward: impl Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    ) -> Var<'g> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = self.grad_enabled && parents.iter().any(|p| nodes[p.id].requires_grad);
        let node = if requires_grad {
            Node {
                value: Arc::new(value),
                requires_grad,
                parents: parents.iter().map(|p| p.id).collect(),
                backward: Some(Box::new(backward)),
            }
        } else {
            Node {
                value: Arc::new(value),
                requires_grad: false,
                parents: Vec::new(),
                backward: None,
            }
        };
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    pub(crate) fn value_of(&self, id: usize) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    /// Keep the gradient of an intermediate node after [`Graph::backward`].
    pub fn retain_grad(&self, var: Var<'_>) {
        self.retained.borrow_mut().insert(var.id);
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        let value = root.value();
        assert_eq!(
            value.numel(),
            1,
            "backward root must be scalar, got {:?}",
            value.shape()
        );
        self.backward_with(root, Tensor::full(value.shape(), 1.0))
    }

    /// Reverse sweep seeded with an explicit output gradient.
    pub fn backward_with(&self, root: Var<'_>, seed: Tensor) -> Gradients {
        assert!(
            std::ptr::eq(root.graph, self),
            "root belongs to another graph"
        );
        let nodes = self.nodes.borrow();
        let retained = self.retained.borrow();
        assert_eq!(seed.shape(), nodes[root.id].value.shape());
        let mut grads: Vec<Option<Tensor>> = vec![None; root.id + 1];
        let mut kept: Vec<Option<Tensor>> = vec![None; nodes.len()];
        if !nodes[root.id].requires_grad {
            return Gradients { grads: kept };
        }
        grads[root.id] = Some(seed);
        for id in (0..=root.id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if let Some(backward) = &node.backward {
                let needs: Vec<bool> = node
                    .parents
                    .iter()
                    .map(|&p| nodes[p].requires_grad)
                    .collect();
                let parent_grads = backward(&grad, &needs);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for ((&p, g), need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                    let (Some(g), true) = (g, *need) else {
                        continue;
                    };
                    debug_assert_eq!(
                        g.shape(),
                        nodes[p].value.shape(),
                        "gradient shape for node {p}"
                    );
                    match &mut grads[p] {
                        Some(acc) => acc.add_assign(&g),
                        slot @ None => *slot = Some(g),
                    }
                }
            }
            if node.parents.is_empty() || retained.contains(&id) {
                kept[id] = Some(grad);
            }
        }
        Gradients { grads: kept }
    }
}

/// Gradients of leaves (and retained intermediates) after a reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

impl<'g> Var<'g> {
    pub fn value(&self) -> Arc<Tensor> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad_of(self.id)
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Var<'g> {
        self.graph.push_leaf(self.value(), false)
    }
}
