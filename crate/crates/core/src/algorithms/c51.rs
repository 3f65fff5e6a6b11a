//! Categorical distributional Q-learning (C51).
//!
//! The network emits `n_atoms` logits per action; a per-action softmax gives
//! the return distribution over a fixed support. Acting is ε-greedy on the
//! expected values. The target for the taken action is the target network's
//! distribution of the greedy next action, shifted by the Bellman operator
//! and projected back onto the support; the loss is its cross-entropy with
//! the online distribution.

use serde::{Deserialize, Serialize};

use super::losses::{c51_project, cross_entropy_with_logits, linear_anneal, C51Support};
use super::{
    check_hidden, check_nonzero, check_positive, check_range, rows_to_matrix, AlgoId, EpisodeLog, FinalReport,
};
use crate::envs::{Action, ActionSpace, VecEnv};
use crate::memory::{ReplayBuffer, Transition};
use crate::nn::distributions::argmax;
use crate::nn::{adam_step, polyak_update, Activation, AdamConfig, AdamState, FlushDenormals, Matrix, Mlp, Scalar};
use crate::rng::tags;
use crate::tracking::{keys, save_checkpoint, Checkpoint, RunHandle};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub env_id: String,
    pub seed: u64,
    pub total_timesteps: u64,
    pub learning_rate: f64,
    /// Adam epsilon; the reference uses 0.01 / batch_size.
    pub adam_eps: f64,
    pub n_atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub buffer_size: usize,
    pub gamma: f64,
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
            adam_eps: 0.01 / 128.0,
            n_atoms: 101,
            v_min: -100.0,
            v_max: 100.0,
            // the reference default; a 100k buffer plateaus near 300 on CartPole at 250k steps
            buffer_size: 10_000,
            gamma: 0.99,
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
        check_positive("adam_eps", self.adam_eps)?;
        if self.n_atoms < 2 {
            return Err(Error::Config(format!(
                "n_atoms must be at least 2, got {}",
                self.n_atoms
            )));
        }
        if !(self.v_min < self.v_max) || !self.v_min.is_finite() || !self.v_max.is_finite() {
            return Err(Error::Config(format!(
                "v_min must be below v_max, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        check_nonzero("buffer_size", self.buffer_size)?;
        check_range("gamma", self.gamma, 0.0, 1.0)?;
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

/// Softmax over one action's block of atom logits.
fn atom_probs<T: Scalar>(logits: &[T]) -> Vec<f64> {
    let max = logits.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Per-action distributions and expected values for one network output row.
fn distributions<T: Scalar>(row: &[T], support: &C51Support) -> (Vec<Vec<f64>>, Vec<f64>) {
    let probs: Vec<Vec<f64>> = row.chunks(support.n_atoms).map(atom_probs).collect();
    let q = probs.iter().map(|p| support.expectation(p)).collect();
    (probs, q)
}

pub fn train(config: &Config, run: &mut RunHandle) -> Result<FinalReport> {
    config.validate()?;
    let _ftz = FlushDenormals::new();
    let n_actions = match super::check_env(AlgoId::C51, &config.env_id)? {
        ActionSpace::Discrete(n) => n,
        _ => unreachable!("checked by check_env"),
    };
    let support = C51Support::new(config.v_min, config.v_max, config.n_atoms)?;
    let n_atoms = config.n_atoms;
    let mut envs = VecEnv::new(&config.env_id, 1, config.seed)?;
    let obs_dim = envs.observation_dim();

    let root = Rng::new(config.seed);
    let mut init_rng = root.child(tags::INIT, 0);
    let mut explore_rng = root.child(tags::EXPLORE, 0);
    let mut replay_rng = root.child(tags::REPLAY, 0);

    let mut sizes = vec![obs_dim];
    sizes.extend(&config.hidden_sizes);
    sizes.push(n_actions * n_atoms);
    let mut q_network = Mlp::<f32>::fan_in_uniform(&sizes, Activation::Relu, Activation::Identity, &mut init_rng)?;
    let mut target_network = q_network.clone();
    let adam = AdamConfig {
        eps: config.adam_eps,
        ..AdamConfig::new(config.learning_rate)
    };
    let mut optimizer = AdamState::for_mlp(&q_network, adam);
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
            let out = q_network.predict(&rows_to_matrix(&[&obs]))?;
            argmax(&distributions(out.row(0), &support).1)
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
                let next_out = target_network.predict(&batch.next_obs)?;
                let (out, cache) = q_network.forward(&batch.obs)?;
                let mut grad_out = Matrix::<f32>::zeros(config.batch_size, n_actions * n_atoms);
                let mut loss = 0.0;
                let inv_b = 1.0 / config.batch_size as f64;
                for i in 0..config.batch_size {
                    let (next_probs, next_q) = distributions(next_out.row(i), &support);
                    let target = c51_project(
                        &support,
                        &next_probs[argmax(&next_q)],
                        batch.rewards[i] as f64,
                        batch.terminated[i],
                        config.gamma,
                    )?;
                    let a = batch.actions[(i, 0)] as usize;
                    let block: Vec<f64> = out.row(i)[a * n_atoms..(a + 1) * n_atoms]
                        .iter()
                        .map(|&v| v as f64)
                        .collect();
                    let (ce, grad) = cross_entropy_with_logits(&block, &target);
                    loss += ce * inv_b;
                    for (g, v) in grad_out.row_mut(i)[a * n_atoms..(a + 1) * n_atoms].iter_mut().zip(grad) {
                        *g = (v * inv_b) as f32;
                    }
                }
                let (grads, _) = q_network.backward(&cache, &grad_out)?;
                adam_step(&mut q_network, &grads, &mut optimizer)?;
                if global_step % 100 == 0 {
                    run.log_metric(step_count, keys::QF_LOSS, loss)?;
                    run.log_metric(step_count, keys::SPS, step_count as f64 / run.elapsed().max(1e-9))?;
                }
            }
            if global_step % config.target_network_frequency == 0 {
                polyak_update(&mut target_network, &q_network, 1.0)?;
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
