//! Deep Q-learning.
//!
//! ε-greedy acting with ε annealed linearly from `start_e` to `end_e` over
//! `exploration_fraction` of the run, a FIFO replay buffer, a one-step TD
//! target from a target network that is hard-synced every
//! `target_network_frequency` steps, and an MSE loss on the taken action's
//! Q-value. No gradient step happens before `learning_starts`.

use serde::{Deserialize, Serialize};

use super::losses::{dqn_target, linear_anneal, mse_loss};
use super::{
    check_hidden, check_nonzero, check_positive, check_range, row_f64, rows_to_matrix, AlgoId, EpisodeLog, FinalReport,
};
use crate::envs::{Action, ActionSpace, VecEnv};
use crate::memory::{ReplayBuffer, Transition};
use crate::nn::distributions::argmax;
use crate::nn::{adam_step, polyak_update, Activation, AdamConfig, AdamState, FlushDenormals, Matrix, Mlp};
use crate::rng::tags;
use crate::tracking::{keys, save_checkpoint, Checkpoint, RunHandle};
use crate::{Result, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub env_id: String,
    pub seed: u64,
    pub total_timesteps: u64,
    pub learning_rate: f64,
    pub buffer_size: usize,
    pub gamma: f64,
    /// 1.0 is a hard copy.
    pub tau: f64,
    pub target_network_frequency: u64,
    pub batch_size: usize,
    pub start_e: f64,
    pub end_e: f64,
    pub exploration_fraction: f64,
    pub learning_starts: u64,
    pub train_frequency: u64,
    pub hidden_sizes: Vec<usize>,
}

impl Config {
    pub fn new(env_id: &str, seed: u64, total_timesteps: u64) -> Self {
        Self {
            env_id: env_id.to_string(),
            seed,
            total_timesteps,
            learning_rate: 2.5e-4,
            // the reference default; a 100k buffer plateaus near 300 on CartPole at 250k steps
            buffer_size: 10_000,
            gamma: 0.99,
            tau: 1.0,
            target_network_frequency: 500,
            batch_size: 128,
            start_e: 1.0,
            end_e: 0.05,
            exploration_fraction: 0.5,
            learning_starts: 10_000,
            train_frequency: 10,
            hidden_sizes: vec![120, 84],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("learning_rate", self.learning_rate)?;
        check_nonzero("buffer_size", self.buffer_size)?;
        check_range("gamma", self.gamma, 0.0, 1.0)?;
        check_range("tau", self.tau, 0.0, 1.0)?;
        check_nonzero("target_network_frequency", self.target_network_frequency as usize)?;
        check_nonzero("batch_size", self.batch_size)?;
        check_range("start_e", self.start_e, 0.0, 1.0)?;
        check_range("end_e", self.end_e, 0.0, 1.0)?;
        check_range("exploration_fraction", self.exploration_fraction, 0.0, 1.0)?;
        check_nonzero("train_frequency", self.train_frequency as usize)?;
        check_hidden(&self.hidden_sizes)
    }

    pub fn train(&self, run: &mut RunHandle) -> Result<FinalReport> {
        train(self, run)
    }
}

pub fn train(config: &Config, run: &mut RunHandle) -> Result<FinalReport> {
    config.validate()?;
    let _ftz = FlushDenormals::new();
    let n_actions = match super::check_env(AlgoId::Dqn, &config.env_id)? {
        ActionSpace::Discrete(n) => n,
        _ => unreachable!("checked by check_env"),
    };
    let mut envs = VecEnv::new(&config.env_id, 1, config.seed)?;
    let obs_dim = envs.observation_dim();

    let root = Rng::new(config.seed);
    let mut init_rng = root.child(tags::INIT, 0);
    let mut explore_rng = root.child(tags::EXPLORE, 0);
    let mut replay_rng = root.child(tags::REPLAY, 0);

    let mut sizes = vec![obs_dim];
    sizes.extend(&config.hidden_sizes);
    sizes.push(n_actions);
    let mut q_network = Mlp::<f32>::fan_in_uniform(&sizes, Activation::Relu, Activation::Identity, &mut init_rng)?;
    let mut target_network = q_network.clone();
    let mut optimizer = AdamState::for_mlp(&q_network, AdamConfig::new(config.learning_rate));
    let mut rb = ReplayBuffer::new(config.buffer_size, obs_dim, 1)?;

    let exploration_steps = (config.exploration_fraction * config.total_timesteps as f64) as u64;
    let mut episodes = EpisodeLog::default();
    let mut obs = envs.observations()[0].clone();

    for global_step in 0..config.total_timesteps {
        let step_count = global_step + 1;
        let epsilon = linear_anneal(config.start_e, config.end_e, exploration_steps, global_step);
        let action = if explore_rng.uniform() < epsilon {
            explore_rng.below(n_actions)
        } else {
            let q = q_network.predict(&rows_to_matrix(&[&obs]))?;
            argmax(&row_f64(&q, 0))
        };

        let step = envs.step(&[Action::Discrete(action)])?;
        let next_obs = step.final_obs[0].as_ref().unwrap_or(&step.obs[0]);
        let obs_f32: Vec<f32> = obs.iter().map(|&v| v as f32).collect();
        let next_f32: Vec<f32> = next_obs.iter().map(|&v| v as f32).collect();
        rb.add(Transition {
            obs: &obs_f32,
            action: &[action as f32],
            reward: step.rewards[0] as f32,
            next_obs: &next_f32,
            terminated: step.terminated[0],
        })?;
        if let Some(info) = &step.infos[0] {
            episodes.record(run, step_count, info)?;
        }
        obs = step.obs[0].clone();

        if global_step > config.learning_starts {
            if global_step % config.train_frequency == 0 {
                let batch = rb.sample(config.batch_size, &mut replay_rng)?;
                let q_next = target_network.predict(&batch.next_obs)?;
                let targets: Vec<f64> = (0..config.batch_size)
                    .map(|i| {
                        dqn_target(
                            batch.rewards[i] as f64,
                            batch.terminated[i],
                            config.gamma,
                            &row_f64(&q_next, i),
                        )
                    })
                    .collect();
                let (q_values, cache) = q_network.forward(&batch.obs)?;
                let taken: Vec<usize> = (0..config.batch_size).map(|i| batch.actions[(i, 0)] as usize).collect();
                let predicted: Vec<f64> = taken
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| q_values[(i, a)] as f64)
                    .collect();
                let (loss, grad) = mse_loss(&predicted, &targets);
                let mut grad_out = Matrix::<f32>::zeros(config.batch_size, n_actions);
                for (i, &a) in taken.iter().enumerate() {
                    grad_out[(i, a)] = grad[i] as f32;
                }
                let (grads, _) = q_network.backward(&cache, &grad_out)?;
                adam_step(&mut q_network, &grads, &mut optimizer)?;
                if global_step % 100 == 0 {
                    run.log_metric(step_count, keys::QF_LOSS, loss)?;
                    run.log_metric(step_count, keys::SPS, step_count as f64 / run.elapsed().max(1e-9))?;
                }
            }
            if global_step % config.target_network_frequency == 0 {
                polyak_update(&mut target_network, &q_network, config.tau)?;
            }
        }
    }

    save_checkpoint(
        run.dir(),
        &Checkpoint {
            networks: vec![
                ("q_network".into(), q_network),
                ("target_network".into(), target_network),
            ],
            tensors: vec![],
        },
    )?;
    Ok(episodes.report(run.dir(), config.total_timesteps))
}
