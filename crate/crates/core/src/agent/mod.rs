//! Diffusion-policy pricing agent.

mod critic;
mod policy;
mod replay;
mod schedule;
mod train;

pub use critic::{update_critic, Critic};
pub use policy::{time_embedding, update_actor, ActionRange, ActionValue, ChainNoise, DiffusionPolicy, SampledAction};
pub use replay::{ReplayBuffer, Transition};
pub use schedule::DiffusionSchedule;
pub use train::{
    curves_csv, evaluate, tail_mean, train, Checkpoint, EnvConfig, EpisodeSummary, TrainConfig, TrainOutcome, Trainer,
    CHECKPOINT_FORMAT, CURVE_COLUMNS,
};
