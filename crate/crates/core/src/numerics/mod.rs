//! Dense tensors, forward kernels and a tape-based reverse-mode autodiff
//! graph. Every trainable model in the crate is expressed in these ops.
//!
//! Models are generic over [`Real`]: `f32` for training, `f64` for
//! finite-difference verification.

pub mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod kernels;
pub mod nn;
mod optim;
mod params;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use kernels::{attention, layer_norm, matmul, set_parallel_matmul, softmax_rows};
pub use optim::{Adam, AdamConfig};
pub use params::ParamStore;
pub use tensor::{Real, Tensor};
