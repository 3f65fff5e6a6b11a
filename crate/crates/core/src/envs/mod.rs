//! Built-in environments and the vectorized wrapper.

mod cartpole;
mod maskedgrid;
mod normalize;
mod pendulum;
mod vec_env;

use serde::{Deserialize, Serialize};

pub use cartpole::{cartpole_step, CartPole, CartPoleState};
pub use maskedgrid::{maskedgrid_step, MaskedGrid, MaskedGridState, GRID_SIZE};
pub use normalize::{normalize_obs, ObsNormalizer, RewardNormalizer, RunningMeanVar};
pub use pendulum::{angle_normalize, pendulum_step, Pendulum, PendulumState};
pub use vec_env::{VecEnv, VecStep};

use crate::{Error, Result, Rng};

pub const CARTPOLE_V1: &str = "cartpole-v1";
pub const PENDULUM_V1: &str = "pendulum-v1";
pub const MASKEDGRID_V0: &str = "maskedgrid-v0";

/// Registered environment ids.
pub const ENV_IDS: [&str; 3] = [CARTPOLE_V1, PENDULUM_V1, MASKEDGRID_V0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { dim: usize, low: f64, high: f64 },
    DiscreteMasked(usize),
}

impl ActionSpace {
    /// Number of discrete actions, if discrete (masked or not).
    pub fn num_discrete(&self) -> Option<usize> {
        match *self {
            ActionSpace::Discrete(n) | ActionSpace::DiscreteMasked(n) => Some(n),
            ActionSpace::Continuous { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Summary attached to the step that ends an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeInfo {
    /// Sum of raw rewards over the episode.
    pub episodic_return: f64,
    pub episodic_length: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// MDP terminal: no bootstrapping past this step.
    pub terminated: bool,
    /// Time-limit cut: bootstrapping continues through the true next state.
    pub truncated: bool,
    pub info: Option<EpisodeInfo>,
}

impl EnvStep {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

pub trait Env: Send {
    fn id(&self) -> &'static str;

    fn observation_dim(&self) -> usize;

    fn action_space(&self) -> ActionSpace;

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;

    fn step(&mut self, action: &Action) -> Result<EnvStep>;

    /// Legal-action mask for the current state, for masked action spaces.
    fn action_mask(&self) -> Option<Vec<bool>> {
        None
    }
}

pub fn make_env(id: &str) -> Result<Box<dyn Env>> {
    match id {
        CARTPOLE_V1 => Ok(Box::new(CartPole::default())),
        PENDULUM_V1 => Ok(Box::new(Pendulum::default())),
        MASKEDGRID_V0 => Ok(Box::new(MaskedGrid::default())),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}

/// Observation dimension and action space of a registered environment.
pub fn describe(id: &str) -> Result<(usize, ActionSpace)> {
    let env = make_env(id)?;
    Ok((env.observation_dim(), env.action_space()))
}
