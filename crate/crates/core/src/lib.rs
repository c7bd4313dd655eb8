//! Learned Green's operators for nonlinear boundary value problems.
//!
//! A pair of autoencoders maps discretized solutions `u` and forcings `F`
//! of a nonlinear BVP into latent vectors `v` and `f` that satisfy a linear
//! relation `L v = f` with a learned symmetric matrix `L`. The inverse
//! `G = L⁻¹` then acts as a Green's matrix: a new forcing is solved by
//! encoding it, multiplying by `G`, and decoding.
//!
//! Crate layout:
//!
//! - [`datagen`]: forcing families, finite-difference Newton solvers for the
//!   four reference systems, dataset assembly and the binary dataset format.
//! - [`autodiff`]: a small reverse-mode engine with the layer types the
//!   encoders and decoders need.
//! - [`model`]: architectures, the six loss terms, and checkpoints.
//! - [`trainer`]: two-phase training and the learning-rate candidate search.
//! - [`greens`]: inference with a trained model and operator export.
//! - [`eval`]: per-sample scoring, box statistics, and the ablation studies.

pub mod autodiff;
pub mod config;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod greens;
pub mod model;
pub mod trainer;

pub use error::{Error, Result};
