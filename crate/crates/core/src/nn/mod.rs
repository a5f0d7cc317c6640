//! Small dense networks with exact reverse-mode gradients, AdamW, and
//! target-network blending. Everything is `f64` and deterministic.

mod adam;
mod dense;

pub use adam::{soft_update, AdamState};
pub use dense::{Activation, Dense, DenseNet, ForwardTrace, Gradients};

/// Hidden-layer nonlinearity used by the agent's networks.
pub const HIDDEN_ACTIVATION: Activation = Activation::Silu;
