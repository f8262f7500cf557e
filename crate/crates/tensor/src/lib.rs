//! Dense `f64` tensors and a define-by-run tape for reverse-mode
//! differentiation.
//!
//! Every operation on a [`Var`] appends a node to its [`Graph`] together with
//! a closure mapping the output gradient to input gradients. Operations panic
//! on shape errors; callers validate shapes at their own API boundary.
//!
//! ```
//! use sonoseg_tensor::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.leaf(Tensor::new(&[2], vec![1.0, 2.0]));
//! let y = x.mul(x).sum_all();
//! let grads = g.backward(y);
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
//! ```

mod graph;
mod ops;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use ops::{bilinear_taps, permutation_index, sigmoid};
pub use tensor::{broadcast_shape, Tensor};
