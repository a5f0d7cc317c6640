//! Bandwidth pricing for semantic-communication AIGC delivery: channel and
//! freshness model, the leader/follower pricing game, a learning environment
//! around it, a diffusion-policy pricing agent, and image-fidelity metrics.

pub mod agent;
pub mod channel;
pub mod config;
pub mod csv;
pub mod env;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod scenario;
pub mod stackelberg;

pub use error::{Error, Result};
