//! Minimal reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records one forward pass; [`Graph::backward`] walks it in
//! reverse and returns gradients for every parameter in the
//! [`ParamStore`] the graph reads from. The op set is exactly what the
//! encoders, decoders and latent operator need: dense layers, 4×4
//! convolutions and their transposes, average pooling, ReLU, additive skips,
//! the latent matrix product and a factor-and-solve against it.

pub mod adam;
pub mod conv;
pub mod graph;
pub mod init;
pub mod linalg;
pub mod tensor;

pub use adam::{AdamConfig, Param, ParamId, ParamStore};
pub use graph::{rel_sq_rows, Graph, Var, REL_EPS};
pub use init::{init_he_normal, init_variance_scaling};
pub use linalg::DenseLu;
pub use tensor::Tensor;
