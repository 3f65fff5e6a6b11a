//! Deep Deterministic Policy Gradient.
//!
//! A tanh-bounded deterministic actor rescaled to the action bounds and a
//! Q critic on `[obs, action]`. Acting adds Gaussian noise of std
//! `exploration_noise · action_scale`, with uniform random actions until
//! `learning_starts`. The critic regresses onto
//! `r + γ(1 − terminated)Q'(s', μ'(s'))`; every `policy_frequency` steps the
//! actor ascends `Q(s, μ(s))` and both target networks move by Polyak
//! averaging.

use serde::{Deserialize, Serialize};

use super::losses::{ddpg_target, mse_loss};
use super::{
    check_hidden, check_nonzero, check_positive, check_range, continuous_bounds, row_f64, rows_to_matrix, AlgoId,
    EpisodeLog, FinalReport,
};
use crate::envs::{Action, VecEnv};
use crate::memory::{ReplayBuffer, Transition};
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
    pub tau: f64,
    pub batch_size: usize,
    /// Std of the acting noise, in units of the action half-range.
    pub exploration_noise: f64,
    pub learning_starts: u64,
    pub policy_frequency: u64,
    pub hidden_sizes: Vec<usize>,
}

impl Config {
    pub fn new(env_id: &str, seed: u64, total_timesteps: u64) -> Self {
        Self {
            env_id: env_id.to_string(),
            seed,
            total_timesteps,
            learning_rate: 3e-4,
            buffer_size: 100_000,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            exploration_noise: 0.1,
            learning_starts: 5_000,
            policy_frequency: 2,
            hidden_sizes: vec![256, 256],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("learning_rate", self.learning_rate)?;
        check_nonzero("buffer_size", self.buffer_size)?;
        check_range("gamma", self.gamma, 0.0, 1.0)?;
        check_range("tau", self.tau, 0.0, 1.0)?;
        check_nonzero("batch_size", self.batch_size)?;
        check_range("exploration_noise", self.exploration_noise, 0.0, f64::MAX)?;
        check_nonzero("policy_frequency", self.policy_frequency as usize)?;
        check_hidden(&self.hidden_sizes)
    }

    pub fn train(&self, run: &mut RunHandle) -> Result<FinalReport> {
        train(self, run)
    }
}

pub fn train(config: &Config, run: &mut RunHandle) -> Result<FinalReport> {
    config.validate()?;
    let _ftz = FlushDenormals::new();
    let (act_dim, low, high) = continuous_bounds(AlgoId::Ddpg, &config.env_id)?;
    let action_scale = (high - low) / 2.0;
    let action_bias = (high + low) / 2.0;
    let mut envs = VecEnv::new(&config.env_id, 1, config.seed)?;
    let obs_dim = envs.observation_dim();

    let root = Rng::new(config.seed);
    let mut init_rng = root.child(tags::INIT, 0);
    let mut explore_rng = root.child(tags::EXPLORE, 0);
    let mut replay_rng = root.child(tags::REPLAY, 0);

    let mut actor_sizes = vec![obs_dim];
    actor_sizes.extend(&config.hidden_sizes);
    actor_sizes.push(act_dim);
    let mut critic_sizes = vec![obs_dim + act_dim];
    critic_sizes.extend(&config.hidden_sizes);
    critic_sizes.push(1);
    let mut actor = Mlp::<f32>::fan_in_uniform(&actor_sizes, Activation::Relu, Activation::Tanh, &mut init_rng)?;
    let mut qf1 = Mlp::<f32>::fan_in_uniform(&critic_sizes, Activation::Relu, Activation::Identity, &mut init_rng)?;
    let mut target_actor = actor.clone();
    let mut qf1_target = qf1.clone();
    let mut actor_opt = AdamState::for_mlp(&actor, AdamConfig::new(config.learning_rate));
    let mut q_opt = AdamState::for_mlp(&qf1, AdamConfig::new(config.learning_rate));
    let mut rb = ReplayBuffer::new(config.buffer_size, obs_dim, act_dim)?;

    let scale = |m: &Matrix<f32>| m.map(|v| (v as f64 * action_scale + action_bias) as f32);
    let mut episodes = EpisodeLog::default();
    let mut obs = envs.observations()[0].clone();
    let mut last_actor_loss = None;

    for global_step in 0..config.total_timesteps {
        let step_count = global_step + 1;
        let action: Vec<f64> = if global_step < config.learning_starts {
            (0..act_dim).map(|_| explore_rng.uniform_range(low, high)).collect()
        } else {
            let mu = actor.predict(&rows_to_matrix(&[&obs]))?;
            row_f64(&mu, 0)
                .iter()
                .map(|&m| {
                    let a =
                        m * action_scale + action_bias + explore_rng.normal() * action_scale * config.exploration_noise;
                    a.clamp(low, high)
                })
                .collect()
        };

        let step = envs.step(&[Action::Continuous(action.clone())])?;
        let next_obs = step.final_obs[0].as_ref().unwrap_or(&step.obs[0]);
        let obs_f32: Vec<f32> = obs.iter().map(|&v| v as f32).collect();
        let next_f32: Vec<f32> = next_obs.iter().map(|&v| v as f32).collect();
        let action_f32: Vec<f32> = action.iter().map(|&v| v as f32).collect();
        rb.add(Transition {
            obs: &obs_f32,
            action: &action_f32,
            reward: step.rewards[0] as f32,
            next_obs: &next_f32,
            terminated: step.terminated[0],
        })?;
        if let Some(info) = &step.infos[0] {
            episodes.record(run, step_count, info)?;
        }
        obs = step.obs[0].clone();

        if global_step > config.learning_starts {
            let batch = rb.sample(config.batch_size, &mut replay_rng)?;
            let next_actions = scale(&target_actor.predict(&batch.next_obs)?);
            let q_next = qf1_target.predict(&batch.next_obs.hcat(&next_actions)?)?;
            let targets: Vec<f64> = (0..config.batch_size)
                .map(|i| {
                    ddpg_target(
                        batch.rewards[i] as f64,
                        batch.terminated[i],
                        config.gamma,
                        q_next.as_slice()[i] as f64,
                    )
                })
                .collect();
            let (q, q_cache) = qf1.forward(&batch.obs.hcat(&batch.actions)?)?;
            let predicted: Vec<f64> = q.as_slice().iter().map(|&v| v as f64).collect();
            let (qf1_loss, grad) = mse_loss(&predicted, &targets);
            let grad_q = Matrix::from_vec(config.batch_size, 1, grad.iter().map(|&g| g as f32).collect())?;
            let (q_grads, _) = qf1.backward(&q_cache, &grad_q)?;
            adam_step(&mut qf1, &q_grads, &mut q_opt)?;

            if global_step % config.policy_frequency == 0 {
                let (mu, actor_cache) = actor.forward(&batch.obs)?;
                let (q_pi, pi_cache) = qf1.forward(&batch.obs.hcat(&scale(&mu))?)?;
                let inv_b = 1.0 / config.batch_size as f64;
                let actor_loss = -q_pi.as_slice().iter().map(|&v| v as f64).sum::<f64>() * inv_b;
                let grad_q = Matrix::from_vec(config.batch_size, 1, vec![-inv_b as f32; config.batch_size])?;
                let grad_in = qf1.input_gradient(&pi_cache, &grad_q)?;
                let grad_mu = grad_in
                    .columns(obs_dim, obs_dim + act_dim)
                    .map(|g| (g as f64 * action_scale) as f32);
                let (actor_grads, _) = actor.backward(&actor_cache, &grad_mu)?;
                adam_step(&mut actor, &actor_grads, &mut actor_opt)?;
                polyak_update(&mut target_actor, &actor, config.tau)?;
                polyak_update(&mut qf1_target, &qf1, config.tau)?;
                last_actor_loss = Some(actor_loss);
            }

            if global_step % 100 == 0 {
                run.log_metric(step_count, keys::QF1_LOSS, qf1_loss)?;
                if let Some(l) = last_actor_loss {
                    run.log_metric(step_count, keys::ACTOR_LOSS, l)?;
                }
                run.log_metric(step_count, keys::SPS, step_count as f64 / run.elapsed().max(1e-9))?;
            }
        }
    }

    save_checkpoint(
        run.dir(),
        &Checkpoint {
            networks: vec![
                ("actor".into(), actor),
                ("qf1".into(), qf1),
                ("target_actor".into(), target_actor),
                ("qf1_target".into(), qf1_target),
            ],
            tensors: vec![],
        },
    )?;
    Ok(episodes.report(run.dir(), config.total_timesteps))
}
