//! Twin Delayed DDPG.
//!
//! DDPG with two critics whose minimum forms the target, Gaussian smoothing
//! noise on the target action, and an actor (plus target networks) updated
//! only every `policy_frequency` critic updates.

use serde::{Deserialize, Serialize};

use super::losses::{mse_loss, td3_smoothed_action, td3_target};
use super::{
    check_hidden, check_nonzero, check_positive, check_range, continuous_bounds, row_f64, rows_to_matrix, AlgoId,
    EpisodeLog, FinalReport,
};
use crate::envs::{Action, VecEnv};
use crate::memory::{ReplayBuffer, Transition};
use crate::nn::{adam_step, polyak_update, Activation, AdamConfig, AdamState, FlushDenormals, Matrix, Mlp, Scalar};
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
    /// Std of the target smoothing noise, same units as `exploration_noise`.
    pub policy_noise: f64,
    pub noise_clip: f64,
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
            policy_noise: 0.2,
            noise_clip: 0.5,
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
        check_range("policy_noise", self.policy_noise, 0.0, f64::MAX)?;
        check_range("noise_clip", self.noise_clip, 0.0, f64::MAX)?;
        check_hidden(&self.hidden_sizes)
    }

    pub fn train(&self, run: &mut RunHandle) -> Result<FinalReport> {
        train(self, run)
    }
}

/// Action bounds and the affine map from the actor's `(−1, 1)` output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBounds {
    pub low: f64,
    pub high: f64,
}

impl ActionBounds {
    pub fn scale(&self) -> f64 {
        (self.high - self.low) / 2.0
    }

    pub fn bias(&self) -> f64 {
        (self.high + self.low) / 2.0
    }

    pub fn rescale<T: Scalar>(&self, m: &Matrix<T>) -> Matrix<T> {
        let (s, b) = (self.scale(), self.bias());
        m.map(|v| T::of(v.as_f64() * s + b))
    }
}

/// The target networks that a TD3 target is built from.
pub struct TargetNets<'a, T> {
    pub actor: &'a Mlp<T>,
    pub q1: &'a Mlp<T>,
    pub q2: &'a Mlp<T>,
}

/// Batched clipped double-Q targets with target policy smoothing.
///
/// `standard_noise` holds one row of `N(0, 1)` draws per sample; it is scaled
/// by `policy_noise`, clipped to `±noise_clip` and rescaled to action units.
#[allow(clippy::too_many_arguments)]
pub fn compute_targets<T: Scalar>(
    nets: &TargetNets<'_, T>,
    next_obs: &Matrix<T>,
    rewards: &[f64],
    terminated: &[bool],
    standard_noise: &[Vec<f64>],
    gamma: f64,
    policy_noise: f64,
    noise_clip: f64,
    bounds: ActionBounds,
) -> Result<Vec<f64>> {
    let mu = bounds.rescale(&nets.actor.predict(next_obs)?);
    let smoothed: Vec<Vec<f64>> = (0..mu.rows())
        .map(|i| {
            let m: Vec<f64> = mu.row(i).iter().map(|v| v.as_f64()).collect();
            td3_smoothed_action(
                &m,
                &standard_noise[i],
                policy_noise,
                noise_clip,
                bounds.scale(),
                bounds.low,
                bounds.high,
            )
        })
        .collect();
    let input = next_obs.hcat(&rows_to_matrix::<T, _>(&smoothed))?;
    let q1 = nets.q1.predict(&input)?;
    let q2 = nets.q2.predict(&input)?;
    Ok((0..rewards.len())
        .map(|i| {
            td3_target(
                rewards[i],
                terminated[i],
                gamma,
                q1.as_slice()[i].as_f64(),
                q2.as_slice()[i].as_f64(),
            )
        })
        .collect())
}

/// One critic regression step; returns the loss.
fn critic_step(q: &mut Mlp<f32>, opt: &mut AdamState<f32>, input: &Matrix<f32>, targets: &[f64]) -> Result<f64> {
    let (pred, cache) = q.forward(input)?;
    let pred: Vec<f64> = pred.as_slice().iter().map(|&v| v as f64).collect();
    let (loss, grad) = mse_loss(&pred, targets);
    let grad = Matrix::from_vec(grad.len(), 1, grad.iter().map(|&g| g as f32).collect())?;
    let (grads, _) = q.backward(&cache, &grad)?;
    adam_step(q, &grads, opt)?;
    Ok(loss)
}

pub fn train(config: &Config, run: &mut RunHandle) -> Result<FinalReport> {
    config.validate()?;
    let _ftz = FlushDenormals::new();
    let (act_dim, low, high) = continuous_bounds(AlgoId::Td3, &config.env_id)?;
    let bounds = ActionBounds { low, high };
    let mut envs = VecEnv::new(&config.env_id, 1, config.seed)?;
    let obs_dim = envs.observation_dim();

    let root = Rng::new(config.seed);
    let mut init_rng = root.child(tags::INIT, 0);
    let mut explore_rng = root.child(tags::EXPLORE, 0);
    let mut replay_rng = root.child(tags::REPLAY, 0);
    let mut policy_rng = root.child(tags::POLICY, 0);

    let mut actor_sizes = vec![obs_dim];
    actor_sizes.extend(&config.hidden_sizes);
    actor_sizes.push(act_dim);
    let mut critic_sizes = vec![obs_dim + act_dim];
    critic_sizes.extend(&config.hidden_sizes);
    critic_sizes.push(1);
    let mut actor = Mlp::<f32>::fan_in_uniform(&actor_sizes, Activation::Relu, Activation::Tanh, &mut init_rng)?;
    let mut qf1 = Mlp::<f32>::fan_in_uniform(&critic_sizes, Activation::Relu, Activation::Identity, &mut init_rng)?;
    let mut qf2 = Mlp::<f32>::fan_in_uniform(&critic_sizes, Activation::Relu, Activation::Identity, &mut init_rng)?;
    let mut target_actor = actor.clone();
    let mut qf1_target = qf1.clone();
    let mut qf2_target = qf2.clone();
    let adam = AdamConfig::new(config.learning_rate);
    let mut actor_opt = AdamState::for_mlp(&actor, adam);
    let mut q1_opt = AdamState::for_mlp(&qf1, adam);
    let mut q2_opt = AdamState::for_mlp(&qf2, adam);
    let mut rb = ReplayBuffer::new(config.buffer_size, obs_dim, act_dim)?;

    let (action_scale, action_bias) = (bounds.scale(), bounds.bias());
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
            let noise: Vec<Vec<f64>> = (0..config.batch_size)
                .map(|_| (0..act_dim).map(|_| policy_rng.normal()).collect())
                .collect();
            let rewards: Vec<f64> = batch.rewards.iter().map(|&r| r as f64).collect();
            let targets = compute_targets(
                &TargetNets {
                    actor: &target_actor,
                    q1: &qf1_target,
                    q2: &qf2_target,
                },
                &batch.next_obs,
                &rewards,
                &batch.terminated,
                &noise,
                config.gamma,
                config.policy_noise,
                config.noise_clip,
                bounds,
            )?;
            let input = batch.obs.hcat(&batch.actions)?;
            let qf1_loss = critic_step(&mut qf1, &mut q1_opt, &input, &targets)?;
            let qf2_loss = critic_step(&mut qf2, &mut q2_opt, &input, &targets)?;

            if global_step % config.policy_frequency == 0 {
                let (mu, actor_cache) = actor.forward(&batch.obs)?;
                let (q_pi, pi_cache) = qf1.forward(&batch.obs.hcat(&bounds.rescale(&mu))?)?;
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
                polyak_update(&mut qf2_target, &qf2, config.tau)?;
                last_actor_loss = Some(actor_loss);
            }

            if global_step % 100 == 0 {
                run.log_metric(step_count, keys::QF1_LOSS, qf1_loss)?;
                run.log_metric(step_count, keys::QF2_LOSS, qf2_loss)?;
                run.log_metric(step_count, keys::QF_LOSS, (qf1_loss + qf2_loss) / 2.0)?;
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
                ("qf2".into(), qf2),
                ("target_actor".into(), target_actor),
                ("qf1_target".into(), qf1_target),
                ("qf2_target".into(), qf2_target),
            ],
            tensors: vec![],
        },
    )?;
    Ok(episodes.report(run.dir(), config.total_timesteps))
}
