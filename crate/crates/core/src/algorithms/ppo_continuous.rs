//! PPO for continuous actions.
//!
//! A diagonal Gaussian policy whose mean comes from the actor MLP and whose
//! log-std is a state-independent parameter vector starting at zero. Sampled
//! actions are stored unclipped and clipped to the action bounds only when
//! sent to the environment. Observations are normalized by running
//! statistics and rewards are scaled by the running std of the discounted
//! return, both clipped to ±10; episodic returns are still reported in raw
//! reward units.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use super::losses::{linear_anneal, normalize_advantages, ppo_loss, PpoLossConfig, PpoMinibatch};
use super::{
    check_hidden, check_nonzero, check_positive, check_range, continuous_bounds, row_f64, rows_to_matrix, AlgoId,
    EpisodeLog, FinalReport,
};
use crate::envs::{Action, ObsNormalizer, RewardNormalizer, VecEnv};
use crate::memory::{minibatches, RolloutBuffer, RolloutStep};
use crate::nn::{
    adam_step, clip_grad_norm, Activation, AdamConfig, AdamState, DiagGaussian, FlushDenormals, Matrix, Mlp,
};
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
    pub anneal_lr: bool,
    pub num_envs: usize,
    pub num_steps: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub num_minibatches: usize,
    pub update_epochs: usize,
    pub norm_adv: bool,
    pub clip_coef: f64,
    pub clip_vloss: bool,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub target_kl: Option<f64>,
    pub normalize_obs: bool,
    pub normalize_reward: bool,
    pub hidden_sizes: Vec<usize>,
}

impl Config {
    pub fn new(env_id: &str, seed: u64, total_timesteps: u64) -> Self {
        Self {
            env_id: env_id.to_string(),
            seed,
            total_timesteps,
            learning_rate: 3e-4,
            anneal_lr: true,
            num_envs: 1,
            num_steps: 2048,
            gamma: 0.99,
            gae_lambda: 0.95,
            num_minibatches: 32,
            update_epochs: 10,
            norm_adv: true,
            clip_coef: 0.2,
            clip_vloss: true,
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            target_kl: None,
            normalize_obs: true,
            normalize_reward: true,
            hidden_sizes: vec![64, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("learning_rate", self.learning_rate)?;
        check_nonzero("num_envs", self.num_envs)?;
        check_nonzero("num_steps", self.num_steps)?;
        check_range("gamma", self.gamma, 0.0, 1.0)?;
        check_range("gae_lambda", self.gae_lambda, 0.0, 1.0)?;
        check_nonzero("num_minibatches", self.num_minibatches)?;
        check_nonzero("update_epochs", self.update_epochs)?;
        if !(self.num_envs * self.num_steps).is_multiple_of(self.num_minibatches) {
            return Err(Error::Config(format!(
                "num_minibatches ({}) must divide num_envs * num_steps ({})",
                self.num_minibatches,
                self.num_envs * self.num_steps
            )));
        }
        check_positive("clip_coef", self.clip_coef)?;
        check_range("ent_coef", self.ent_coef, 0.0, f64::MAX)?;
        check_range("vf_coef", self.vf_coef, 0.0, f64::MAX)?;
        check_positive("max_grad_norm", self.max_grad_norm)?;
        if let Some(kl) = self.target_kl {
            check_positive("target_kl", kl)?;
        }
        check_hidden(&self.hidden_sizes)
    }

    pub fn train(&self, run: &mut RunHandle) -> Result<FinalReport> {
        train(self, run)
    }
}

pub fn train(config: &Config, run: &mut RunHandle) -> Result<FinalReport> {
    config.validate()?;
    let _ftz = FlushDenormals::new();
    let (act_dim, low, high) = continuous_bounds(AlgoId::PpoContinuous, &config.env_id)?;
    let num_envs = config.num_envs;
    let mut envs = VecEnv::new(&config.env_id, num_envs, config.seed)?;
    let obs_dim = envs.observation_dim();

    let root = Rng::new(config.seed);
    let mut init_rng = root.child(tags::INIT, 0);
    let mut policy_rng = root.child(tags::POLICY, 0);
    let mut minibatch_rng = root.child(tags::MINIBATCH, 0);

    let mut actor_sizes = vec![obs_dim];
    actor_sizes.extend(&config.hidden_sizes);
    let mut critic_sizes = actor_sizes.clone();
    actor_sizes.push(act_dim);
    critic_sizes.push(1);
    let mut actor = Mlp::<f32>::orthogonal(
        &actor_sizes,
        Activation::Tanh,
        Activation::Identity,
        SQRT_2,
        0.01,
        &mut init_rng,
    )?;
    let mut critic = Mlp::<f32>::orthogonal(
        &critic_sizes,
        Activation::Tanh,
        Activation::Identity,
        SQRT_2,
        1.0,
        &mut init_rng,
    )?;
    let mut log_std = vec![0.0f32; act_dim];
    let adam = AdamConfig::ppo(config.learning_rate);
    let mut actor_opt = AdamState::for_mlp(&actor, adam);
    let mut critic_opt = AdamState::for_mlp(&critic, adam);
    let mut log_std_opt = AdamState::<f32>::new(&[act_dim], adam);

    let mut obs_norm = ObsNormalizer::new(obs_dim);
    let mut reward_norm = RewardNormalizer::new(num_envs, config.gamma);
    let observe = |rows: &[Vec<f64>], norm: &mut ObsNormalizer| -> Result<Vec<Vec<f64>>> {
        if config.normalize_obs {
            norm.update_and_normalize(rows)
        } else {
            Ok(rows.to_vec())
        }
    };

    let batch_size = num_envs * config.num_steps;
    let num_iterations = config.total_timesteps / batch_size as u64;
    let loss_cfg = PpoLossConfig {
        clip_coef: config.clip_coef,
        ent_coef: config.ent_coef,
        vf_coef: config.vf_coef,
        clip_vloss: config.clip_vloss,
    };

    let mut buffer = RolloutBuffer::new(config.num_steps, num_envs, obs_dim, act_dim, 0);
    let mut episodes = EpisodeLog::default();
    let mut global_step = 0u64;
    let mut obs: Matrix<f32> = if num_iterations > 0 {
        rows_to_matrix(&observe(envs.observations(), &mut obs_norm)?)
    } else {
        rows_to_matrix(envs.observations())
    };

    for iteration in 0..num_iterations {
        if config.anneal_lr {
            let lr = linear_anneal(config.learning_rate, 0.0, num_iterations, iteration);
            actor_opt.set_lr(lr);
            critic_opt.set_lr(lr);
            log_std_opt.set_lr(lr);
        }

        buffer.clear();
        for _ in 0..config.num_steps {
            global_step += num_envs as u64;
            let means = actor.predict(&obs)?;
            let values: Vec<f64> = critic.predict(&obs)?.as_slice().iter().map(|&v| v as f64).collect();
            let std_row: Vec<f64> = log_std.iter().map(|&s| s as f64).collect();
            let mut actions = Vec::with_capacity(num_envs * act_dim);
            let mut env_actions = Vec::with_capacity(num_envs);
            let mut log_probs = Vec::with_capacity(num_envs);
            for i in 0..num_envs {
                let dist = DiagGaussian::new(row_f64(&means, i), std_row.clone())?;
                let a = dist.sample(&mut policy_rng);
                log_probs.push(dist.log_prob(&a));
                env_actions.push(Action::Continuous(a.iter().map(|x| x.clamp(low, high)).collect()));
                actions.extend(a.iter().map(|&x| x as f32));
            }
            let step = envs.step(&env_actions)?;

            let ended: Vec<bool> = (0..num_envs).map(|i| step.terminated[i] || step.truncated[i]).collect();
            let rewards = if config.normalize_reward {
                reward_norm.normalize(&step.rewards, &ended)?
            } else {
                step.rewards.clone()
            };

            let mut bootstrap = vec![0.0; num_envs];
            let cut: Vec<usize> = (0..num_envs).filter(|&i| step.truncated[i]).collect();
            if !cut.is_empty() {
                let finals: Vec<Vec<f64>> = cut
                    .iter()
                    .map(|&i| {
                        let o = step.final_obs[i].as_ref().expect("final obs");
                        if config.normalize_obs {
                            obs_norm.normalize(o)
                        } else {
                            o.clone()
                        }
                    })
                    .collect();
                let v = critic.predict(&rows_to_matrix(&finals))?;
                for (k, &i) in cut.iter().enumerate() {
                    bootstrap[i] = v.as_slice()[k] as f64;
                }
            }

            buffer.push(RolloutStep {
                obs: obs.as_slice(),
                actions: &actions,
                log_probs: &log_probs,
                values: &values,
                rewards: &rewards,
                terminated: &step.terminated,
                truncated: &step.truncated,
                bootstrap_values: &bootstrap,
                masks: None,
            })?;
            for info in step.infos.iter().flatten() {
                episodes.record(run, global_step, info)?;
            }
            obs = rows_to_matrix(&observe(&step.obs, &mut obs_norm)?);
        }

        let last_values: Vec<f64> = critic.predict(&obs)?.as_slice().iter().map(|&v| v as f64).collect();
        let (advantages, returns) = buffer.compute_gae(&last_values, config.gamma, config.gae_lambda)?;

        let mut clip_fractions = Vec::new();
        let mut last_stats = None;
        'epochs: for _ in 0..config.update_epochs {
            for mb in minibatches(batch_size, config.num_minibatches, &mut minibatch_rng)? {
                let mb_obs = buffer.obs_rows(&mb);
                let mb_actions = buffer.action_rows(&mb);
                let (means, actor_cache) = actor.forward(&mb_obs)?;
                let (values, critic_cache) = critic.forward(&mb_obs)?;
                let std_row: Vec<f64> = log_std.iter().map(|&s| s as f64).collect();

                let mut dists = Vec::with_capacity(mb.len());
                let mut new_log_probs = Vec::with_capacity(mb.len());
                let mut entropy = Vec::with_capacity(mb.len());
                for row in 0..mb.len() {
                    let dist = DiagGaussian::new(row_f64(&means, row), std_row.clone())?;
                    new_log_probs.push(dist.log_prob(&row_f64(&mb_actions, row)));
                    entropy.push(dist.entropy());
                    dists.push(dist);
                }
                let new_values: Vec<f64> = values.as_slice().iter().map(|&v| v as f64).collect();
                let mut mb_adv: Vec<f64> = mb.iter().map(|&i| advantages[i]).collect();
                if config.norm_adv {
                    normalize_advantages(&mut mb_adv);
                }
                let old_log_probs: Vec<f64> = mb.iter().map(|&i| buffer.log_probs[i]).collect();
                let mb_returns: Vec<f64> = mb.iter().map(|&i| returns[i]).collect();
                let old_values: Vec<f64> = mb.iter().map(|&i| buffer.values[i]).collect();
                let loss = ppo_loss(
                    &PpoMinibatch {
                        advantages: &mb_adv,
                        old_log_probs: &old_log_probs,
                        returns: &mb_returns,
                        old_values: &old_values,
                    },
                    &new_log_probs,
                    &entropy,
                    &new_values,
                    &loss_cfg,
                )?;

                // entropy of a diagonal Gaussian is Σ log_std + const
                let mut grad_means = Matrix::<f32>::zeros(mb.len(), act_dim);
                let mut grad_log_std = vec![0.0f64; act_dim];
                for (row, dist) in dists.iter().enumerate() {
                    let (dm, ds) = dist.grad_log_prob(&row_f64(&mb_actions, row));
                    for k in 0..act_dim {
                        grad_means[(row, k)] = (loss.d_log_probs[row] * dm[k]) as f32;
                        grad_log_std[k] += loss.d_log_probs[row] * ds[k] + loss.d_entropy[row];
                    }
                }
                let mut grad_log_std: Vec<f32> = grad_log_std.iter().map(|&g| g as f32).collect();
                let grad_values = Matrix::from_vec(mb.len(), 1, loss.d_values.iter().map(|&g| g as f32).collect())?;
                let (mut actor_grads, _) = actor.backward(&actor_cache, &grad_means)?;
                let (mut critic_grads, _) = critic.backward(&critic_cache, &grad_values)?;
                clip_grad_norm(
                    &mut [&mut actor_grads, &mut grad_log_std, &mut critic_grads],
                    config.max_grad_norm,
                )?;
                adam_step(&mut actor, &actor_grads, &mut actor_opt)?;
                adam_step(&mut critic, &critic_grads, &mut critic_opt)?;
                log_std_opt.step_slices(vec![&mut log_std], &[&grad_log_std])?;

                clip_fractions.push(loss.stats.clip_fraction);
                last_stats = Some(loss.stats);
            }
            if let (Some(limit), Some(stats)) = (config.target_kl, last_stats) {
                if stats.approx_kl > limit {
                    break 'epochs;
                }
            }
        }

        if let Some(stats) = last_stats {
            run.log_metric(global_step, keys::VALUE_LOSS, stats.value_loss)?;
            run.log_metric(global_step, keys::POLICY_LOSS, stats.policy_loss)?;
            run.log_metric(global_step, keys::ENTROPY, stats.entropy)?;
            run.log_metric(global_step, keys::APPROX_KL, stats.approx_kl)?;
            let mean_clip = clip_fractions.iter().sum::<f64>() / clip_fractions.len() as f64;
            run.log_metric(global_step, keys::CLIP_FRACTION, mean_clip)?;
        }
        run.log_metric(global_step, keys::SPS, global_step as f64 / run.elapsed().max(1e-9))?;
    }

    let to_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    save_checkpoint(
        run.dir(),
        &Checkpoint {
            networks: vec![("actor".into(), actor), ("critic".into(), critic)],
            tensors: vec![
                ("log_std".into(), log_std),
                ("obs_mean".into(), to_f32(&obs_norm.rms.mean)),
                ("obs_var".into(), to_f32(&obs_norm.rms.var)),
            ],
        },
    )?;
    Ok(episodes.report(run.dir(), global_step))
}
