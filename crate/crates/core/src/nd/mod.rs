//! Dense f64 tensors and a define-by-run reverse-mode graph.
//!
//! A [`Graph`] is rebuilt for every forward pass. Parameters enter it as
//! leaves copied from their owning [`Tensor`]; after [`Graph::backward`] the
//! caller folds the returned [`Gradients`] back into those tensors with
//! [`Tensor::accumulate_grad`].

mod graph;
mod tensor;

pub use graph::{BinaryKind, Gradients, Graph, NodeId};
pub use tensor::Tensor;
