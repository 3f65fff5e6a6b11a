//! Single-file deep reinforcement learning on a minimal numeric core.
//!
//! Every algorithm under [`algorithms`] owns its full training loop in one
//! source file. The shared infrastructure is deliberately small:
//!
//! - [`nn`]: MLPs with exact reverse-mode gradients, Adam, gradient clipping
//!   and the probability distributions used by the policies.
//! - [`envs`]: CartPole, Pendulum and a masked gridworld, plus a synchronous
//!   vectorized wrapper and running normalizers.
//! - [`memory`]: on-policy rollout storage with GAE and an off-policy replay ring.
//! - [`tracking`]: run directories, JSONL metric logs, checkpoints and SVG
//!   learning-curve reports.

// range loops over parallel per-env arrays read better indexed; negated
// float comparisons are deliberate NaN rejection
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod envs;
mod error;
pub mod memory;
pub mod nn;
pub mod rng;
pub mod tracking;

pub use error::{Error, Result};
pub use rng::Rng;
