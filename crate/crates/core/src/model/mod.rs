//! The dual-autoencoder model: `ψ_u`, `φ_F`, their decoders, and the
//! symmetric latent operator `L = (W + Wᵀ)/2` with Green's matrix `G = L⁻¹`.

pub mod arch;
pub mod checkpoint;
pub mod loss;

pub use arch::{ArchKind, Architecture, Model, OperatorInit};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use loss::{loss_and_grads, losses, per_sample, Batch, LossBreakdown, Phase, SampleLosses};
