//! Trajectory storage: on-policy rollouts with GAE, off-policy replay.

mod replay;
mod rollout;

pub use replay::{ReplayBatch, ReplayBuffer, Transition};
pub use rollout::{compute_gae, minibatches, RolloutBuffer, RolloutStep};
