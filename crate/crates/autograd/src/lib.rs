//! Tape-based reverse-mode automatic differentiation over dense row-major
//! tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles.
//! Calling [`Graph::backward`] on a scalar walks the tape in reverse and
//! returns the gradient of every node that was created with
//! `requires_grad`. Operations are coarse-grained (fused linear layers,
//! multi-head attention, convolution, box losses) so a forward/backward pass
//! over a small transformer stays allocation-light on a single core.
//!
//! Everything is generic over [`Real`], implemented for `f32` (training) and
//! `f64` (finite-difference gradient checks).

mod graph;
mod ops;
mod real;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use ops::attention::{AttentionSpec, AttentionWeights};
pub use ops::conv::Conv2dSpec;
pub use ops::loss::BoxLossKind;
pub use real::Real;
pub use tensor::Tensor;
