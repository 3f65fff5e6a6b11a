//! Proximal Policy Optimization for discrete actions.
//!
//! Synchronous rollouts from `num_envs` environments, GAE advantages, and
//! several epochs of clipped-surrogate updates over shuffled minibatches.
//! Separate actor and critic MLPs with orthogonal init, Adam with eps 1e-5,
//! a linearly annealed learning rate and global gradient-norm clipping.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use super::losses::{linear_anneal, normalize_advantages, ppo_loss, PpoLossConfig, PpoMinibatch};
use super::{
    check_hidden, check_nonzero, check_positive, check_range, row_f64, rows_to_matrix, AlgoId, EpisodeLog, FinalReport,
};
use crate::envs::{Action, ActionSpace, VecEnv};
use crate::memory::{minibatches, RolloutBuffer, RolloutStep};
use crate::nn::{
    adam_step, clip_grad_norm, Activation, AdamConfig, AdamState, Categorical, FlushDenormals, Matrix, Mlp,
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
    /// Stop the epoch loop early once approx-KL exceeds this.
    pub target_kl: Option<f64>,
    pub hidden_sizes: Vec<usize>,
}

impl Config {
    pub fn new(env_id: &str, seed: u64, total_timesteps: u64) -> Self {
        Self {
            env_id: env_id.to_string(),
            seed,
            total_timesteps,
            // 2.5e-4 leaves several seeds short of a solved CartPole at 250k steps
            learning_rate: 1e-3,
            anneal_lr: true,
            num_envs: 4,
            num_steps: 128,
            gamma: 0.99,
            gae_lambda: 0.95,
            num_minibatches: 4,
            update_epochs: 4,
            norm_adv: true,
            clip_coef: 0.2,
            clip_vloss: true,
            ent_coef: 0.01,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            target_kl: None,
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
    let n_actions = match super::check_env(AlgoId::Ppo, &config.env_id)? {
        ActionSpace::Discrete(n) => n,
        _ => unreachable!("checked by check_env"),
    };
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
    actor_sizes.push(n_actions);
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
    let mut actor_opt = AdamState::for_mlp(&actor, AdamConfig::ppo(config.learning_rate));
    let mut critic_opt = AdamState::for_mlp(&critic, AdamConfig::ppo(config.learning_rate));

    let batch_size = num_envs * config.num_steps;
    let num_iterations = config.total_timesteps / batch_size as u64;
    let loss_cfg = PpoLossConfig {
        clip_coef: config.clip_coef,
        ent_coef: config.ent_coef,
        vf_coef: config.vf_coef,
        clip_vloss: config.clip_vloss,
    };

    let mut buffer = RolloutBuffer::new(config.num_steps, num_envs, obs_dim, 1, 0);
    let mut episodes = EpisodeLog::default();
    let mut global_step = 0u64;
    let mut obs: Matrix<f32> = rows_to_matrix(envs.observations());

    for iteration in 0..num_iterations {
        if config.anneal_lr {
            let lr = linear_anneal(config.learning_rate, 0.0, num_iterations, iteration);
            actor_opt.set_lr(lr);
            critic_opt.set_lr(lr);
        }

        buffer.clear();
        for _ in 0..config.num_steps {
            global_step += num_envs as u64;
            let logits = actor.predict(&obs)?;
            let values: Vec<f64> = critic.predict(&obs)?.as_slice().iter().map(|&v| v as f64).collect();
            let mut actions = Vec::with_capacity(num_envs);
            let mut log_probs = Vec::with_capacity(num_envs);
            for i in 0..num_envs {
                let dist = Categorical::from_logits(&row_f64(&logits, i))?;
                let a = dist.sample(&mut policy_rng);
                log_probs.push(dist.log_prob(a));
                actions.push(a);
            }
            let step = envs.step(&actions.iter().map(|&a| Action::Discrete(a)).collect::<Vec<_>>())?;

            // truncated episodes bootstrap from the value of their true final state
            let mut bootstrap = vec![0.0; num_envs];
            let cut: Vec<usize> = (0..num_envs).filter(|&i| step.truncated[i]).collect();
            if !cut.is_empty() {
                let finals: Vec<&Vec<f64>> = cut
                    .iter()
                    .map(|&i| step.final_obs[i].as_ref().expect("final obs"))
                    .collect();
                let v = critic.predict(&rows_to_matrix(&finals))?;
                for (k, &i) in cut.iter().enumerate() {
                    bootstrap[i] = v.as_slice()[k] as f64;
                }
            }

            let action_f32: Vec<f32> = actions.iter().map(|&a| a as f32).collect();
            buffer.push(RolloutStep {
                obs: obs.as_slice(),
                actions: &action_f32,
                log_probs: &log_probs,
                values: &values,
                rewards: &step.rewards,
                terminated: &step.terminated,
                truncated: &step.truncated,
                bootstrap_values: &bootstrap,
                masks: None,
            })?;
            for info in step.infos.iter().flatten() {
                episodes.record(run, global_step, info)?;
            }
            obs = rows_to_matrix(&step.obs);
        }

        let last_values: Vec<f64> = critic.predict(&obs)?.as_slice().iter().map(|&v| v as f64).collect();
        let (advantages, returns) = buffer.compute_gae(&last_values, config.gamma, config.gae_lambda)?;

        let mut clip_fractions = Vec::new();
        let mut last_stats = None;
        'epochs: for _ in 0..config.update_epochs {
            for mb in minibatches(batch_size, config.num_minibatches, &mut minibatch_rng)? {
                let mb_obs = buffer.obs_rows(&mb);
                let (logits, actor_cache) = actor.forward(&mb_obs)?;
                let (values, critic_cache) = critic.forward(&mb_obs)?;

                let mut dists = Vec::with_capacity(mb.len());
                let mut mb_actions = Vec::with_capacity(mb.len());
                let mut new_log_probs = Vec::with_capacity(mb.len());
                let mut entropy = Vec::with_capacity(mb.len());
                for (row, &idx) in mb.iter().enumerate() {
                    let dist = Categorical::from_logits(&row_f64(&logits, row))?;
                    let a = buffer.actions[idx] as usize;
                    new_log_probs.push(dist.log_prob(a));
                    entropy.push(dist.entropy());
                    mb_actions.push(a);
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

                let mut grad_logits = Matrix::<f32>::zeros(mb.len(), n_actions);
                for (row, dist) in dists.iter().enumerate() {
                    let g_lp = dist.grad_log_prob(mb_actions[row]);
                    let g_ent = dist.grad_entropy();
                    for (k, out) in grad_logits.row_mut(row).iter_mut().enumerate() {
                        *out = (loss.d_log_probs[row] * g_lp[k] + loss.d_entropy[row] * g_ent[k]) as f32;
                    }
                }
                let grad_values = Matrix::from_vec(mb.len(), 1, loss.d_values.iter().map(|&g| g as f32).collect())?;
                let (mut actor_grads, _) = actor.backward(&actor_cache, &grad_logits)?;
                let (mut critic_grads, _) = critic.backward(&critic_cache, &grad_values)?;
                clip_grad_norm(&mut [&mut actor_grads, &mut critic_grads], config.max_grad_norm)?;
                adam_step(&mut actor, &actor_grads, &mut actor_opt)?;
                adam_step(&mut critic, &critic_grads, &mut critic_opt)?;

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

    save_checkpoint(
        run.dir(),
        &Checkpoint {
            networks: vec![("actor".into(), actor), ("critic".into(), critic)],
            tensors: vec![],
        },
    )?;
    Ok(episodes.report(run.dir(), global_step))
}
