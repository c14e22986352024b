//! Reverse-mode differentiation over dense `f64` tensors, plus Adam.

mod adam;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Graph, NodeId};
pub use tensor::{GradBuffer, Param, ParamId, ParamStore, Tensor};
