//! Dense tensors and a reverse-mode differentiation tape.

mod fd;
mod graph;
mod tensor;

pub use fd::{finite_difference_at, finite_difference_grad, relative_error};
pub use graph::{Graph, NodeGrads, OpKind, ParamId, Var};
#[cfg(test)]
pub(crate) use graph::sigmoid;
pub use tensor::Tensor;
