//! Dense tensors, a reverse-mode autodiff tape, layers and the Adam optimizer.

pub mod check;
mod gemm;
mod graph;
mod layers;
mod params;
mod tensor;

pub use graph::{cross_entropy, softmax_in_place, Graph, Var};
pub use layers::{Conv1d, Dense, Gru, LEAKY_SLOPE};
pub use params::{adam_step, glorot_uniform, Adam, ParamSet};
pub use tensor::Tensor;
