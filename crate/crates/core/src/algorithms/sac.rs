//! Soft Actor-Critic with automatic entropy tuning.
//!
//! The actor outputs a mean and log-std per action dimension; actions are
//! `tanh` squashed Gaussian draws rescaled to the bounds. Twin critics regress
//! onto the soft target, the actor minimizes `α·logπ − min(Q1, Q2)` through a
//! reparameterized draw, and `log α` is driven towards the entropy target
//! `−action_dim`. Every step after `learning_starts` performs one update of
//! each and moves the target critics by Polyak averaging.

use serde::{Deserialize, Serialize};

use super::losses::{mse_loss, sac_alpha_loss, sac_target};
use super::td3::ActionBounds;
use super::{
    check_hidden, check_nonzero, check_positive, check_range, continuous_bounds, rows_to_matrix, AlgoId, EpisodeLog,
    FinalReport,
};
use crate::envs::{Action, VecEnv};
use crate::memory::{ReplayBuffer, Transition};
use crate::nn::distributions::tanh_gaussian_with_noise;
use crate::nn::{
    adam_step, polyak_update, Activation, AdamConfig, AdamState, FlushDenormals, GradSet, Matrix, Mlp, Scalar,
    TanhGaussianSample,
};
use crate::rng::tags;
use crate::tracking::{keys, save_checkpoint, Checkpoint, RunHandle};
use crate::{Result, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub env_id: String,
    pub seed: u64,
    pub total_timesteps: u64,
    pub q_lr: f64,
    pub policy_lr: f64,
    pub alpha_lr: f64,
    pub buffer_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub learning_starts: u64,
    /// Tune `α` online; when off, `α = exp(initial_log_alpha)` throughout.
    pub autotune: bool,
    pub initial_log_alpha: f64,
    pub hidden_sizes: Vec<usize>,
}

impl Config {
    pub fn new(env_id: &str, seed: u64, total_timesteps: u64) -> Self {
        Self {
            env_id: env_id.to_string(),
            seed,
            total_timesteps,
            q_lr: 3e-4,
            policy_lr: 3e-4,
            alpha_lr: 1e-3,
            buffer_size: 100_000,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            learning_starts: 5_000,
            autotune: true,
            initial_log_alpha: 0.0,
            hidden_sizes: vec![256, 256],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("q_lr", self.q_lr)?;
        check_positive("policy_lr", self.policy_lr)?;
        check_positive("alpha_lr", self.alpha_lr)?;
        check_nonzero("buffer_size", self.buffer_size)?;
        check_range("gamma", self.gamma, 0.0, 1.0)?;
        check_range("tau", self.tau, 0.0, 1.0)?;
        check_nonzero("batch_size", self.batch_size)?;
        check_range("initial_log_alpha", self.initial_log_alpha, -20.0, 20.0)?;
        check_hidden(&self.hidden_sizes)
    }

    pub fn train(&self, run: &mut RunHandle) -> Result<FinalReport> {
        train(self, run)
    }
}

/// A sampled minibatch in network precision.
pub struct SacBatch<'a, T> {
    pub obs: &'a Matrix<T>,
    pub actions: &'a Matrix<T>,
    pub rewards: &'a [f64],
    pub terminated: &'a [bool],
    pub next_obs: &'a Matrix<T>,
}

/// Online and target networks read by an update.
pub struct SacNets<'a, T> {
    pub actor: &'a Mlp<T>,
    pub q1: &'a Mlp<T>,
    pub q2: &'a Mlp<T>,
    pub q1_target: &'a Mlp<T>,
    pub q2_target: &'a Mlp<T>,
}

pub struct CriticUpdate<T> {
    pub targets: Vec<f64>,
    pub qf1_loss: f64,
    pub qf2_loss: f64,
    pub q1_grads: GradSet<T>,
    pub q2_grads: GradSet<T>,
}

pub struct ActorUpdate<T> {
    pub actor_loss: f64,
    pub alpha_loss: f64,
    /// `∂ alpha_loss / ∂ log α`.
    pub alpha_grad: f64,
    pub log_probs: Vec<f64>,
    pub actor_grads: GradSet<T>,
}

pub struct SacLosses<T> {
    pub critic: CriticUpdate<T>,
    pub actor: ActorUpdate<T>,
}

/// Squashed-Gaussian draws for every row of `obs`, with the given noise.
fn sample_policy<T: Scalar>(actor: &Mlp<T>, head: &Matrix<T>, noise: &[Vec<f64>]) -> Vec<TanhGaussianSample> {
    let d = actor.output_dim() / 2;
    (0..head.rows())
        .map(|i| {
            let row: Vec<f64> = head.row(i).iter().map(|v| v.as_f64()).collect();
            tanh_gaussian_with_noise(&row[..d], &row[d..], noise[i].clone())
        })
        .collect()
}

fn scaled_actions<T: Scalar>(samples: &[TanhGaussianSample], bounds: ActionBounds) -> Matrix<T> {
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.action.iter().map(|a| a * bounds.scale() + bounds.bias()).collect())
        .collect();
    rows_to_matrix(&rows)
}

fn column_f64<T: Scalar>(m: &Matrix<T>) -> Vec<f64> {
    m.as_slice().iter().map(|v| v.as_f64()).collect()
}

fn column_matrix<T: Scalar>(v: &[f64]) -> Result<Matrix<T>> {
    Matrix::from_vec(v.len(), 1, v.iter().map(|&x| T::of(x)).collect())
}

/// Soft targets and both critics' MSE losses and gradients.
#[allow(clippy::too_many_arguments)]
pub fn critic_update<T: Scalar>(
    nets: &SacNets<'_, T>,
    batch: &SacBatch<'_, T>,
    alpha: f64,
    gamma: f64,
    next_noise: &[Vec<f64>],
    bounds: ActionBounds,
) -> Result<CriticUpdate<T>> {
    let next = sample_policy(nets.actor, &nets.actor.predict(batch.next_obs)?, next_noise);
    let next_input = batch.next_obs.hcat(&scaled_actions(&next, bounds))?;
    let q1_next = column_f64(&nets.q1_target.predict(&next_input)?);
    let q2_next = column_f64(&nets.q2_target.predict(&next_input)?);
    let targets: Vec<f64> = (0..batch.rewards.len())
        .map(|i| {
            sac_target(
                batch.rewards[i],
                batch.terminated[i],
                gamma,
                q1_next[i],
                q2_next[i],
                alpha,
                next[i].log_prob,
            )
        })
        .collect();

    let input = batch.obs.hcat(batch.actions)?;
    let regress = |q: &Mlp<T>| -> Result<(f64, GradSet<T>)> {
        let (pred, cache) = q.forward(&input)?;
        let (loss, grad) = mse_loss(&column_f64(&pred), &targets);
        let (grads, _) = q.backward(&cache, &column_matrix(&grad)?)?;
        Ok((loss, grads))
    };
    let (qf1_loss, q1_grads) = regress(nets.q1)?;
    let (qf2_loss, q2_grads) = regress(nets.q2)?;
    Ok(CriticUpdate {
        targets,
        qf1_loss,
        qf2_loss,
        q1_grads,
        q2_grads,
    })
}

/// Actor loss `mean(α·logπ(ã|s) − min(Q1, Q2)(s, ã))` with its gradient, and
/// the temperature loss evaluated on the same draws.
pub fn actor_update<T: Scalar>(
    nets: &SacNets<'_, T>,
    obs: &Matrix<T>,
    log_alpha: f64,
    noise: &[Vec<f64>],
    bounds: ActionBounds,
) -> Result<ActorUpdate<T>> {
    let alpha = log_alpha.exp();
    let b = obs.rows();
    let inv_b = 1.0 / b as f64;
    let obs_dim = obs.cols();
    let (head, actor_cache) = nets.actor.forward(obs)?;
    let samples = sample_policy(nets.actor, &head, noise);
    let act_dim = nets.actor.output_dim() / 2;
    let input = obs.hcat(&scaled_actions(&samples, bounds))?;
    let (q1, c1) = nets.q1.forward(&input)?;
    let (q2, c2) = nets.q2.forward(&input)?;
    let (q1, q2) = (column_f64(&q1), column_f64(&q2));

    // the minimum picks which critic receives the upstream gradient
    let first_is_min: Vec<bool> = (0..b).map(|i| q1[i] <= q2[i]).collect();
    let sel = |want: bool| -> Vec<f64> {
        first_is_min
            .iter()
            .map(|&m| if m == want { -inv_b } else { 0.0 })
            .collect()
    };
    let g1 = nets.q1.input_gradient(&c1, &column_matrix(&sel(true))?)?;
    let g2 = nets.q2.input_gradient(&c2, &column_matrix(&sel(false))?)?;

    let log_probs: Vec<f64> = samples.iter().map(|s| s.log_prob).collect();
    let mut actor_loss = 0.0;
    let mut head_grad = Matrix::<T>::zeros(b, 2 * act_dim);
    for i in 0..b {
        actor_loss += (alpha * log_probs[i] - q1[i].min(q2[i])) * inv_b;
        let grad_action: Vec<f64> = (0..act_dim)
            .map(|d| (g1[(i, obs_dim + d)].as_f64() + g2[(i, obs_dim + d)].as_f64()) * bounds.scale())
            .collect();
        let (dm, ds) = samples[i].backward(&grad_action, alpha * inv_b);
        for d in 0..act_dim {
            head_grad[(i, d)] = T::of(dm[d]);
            head_grad[(i, act_dim + d)] = T::of(ds[d]);
        }
    }
    let (actor_grads, _) = nets.actor.backward(&actor_cache, &head_grad)?;
    let target_entropy = -(act_dim as f64);
    let (alpha_loss, alpha_grad) = sac_alpha_loss(log_alpha, &log_probs, target_entropy);
    Ok(ActorUpdate {
        actor_loss,
        alpha_loss,
        alpha_grad,
        log_probs,
        actor_grads,
    })
}

/// Critic, actor and temperature losses (with gradients) for one batch, all
/// evaluated at the current parameters. Training applies the critic step
/// before computing the actor part; this combined form exists for checking.
#[allow(clippy::too_many_arguments)]
pub fn sac_update_targets_and_losses<T: Scalar>(
    nets: &SacNets<'_, T>,
    batch: &SacBatch<'_, T>,
    log_alpha: f64,
    gamma: f64,
    next_noise: &[Vec<f64>],
    pi_noise: &[Vec<f64>],
    bounds: ActionBounds,
) -> Result<SacLosses<T>> {
    Ok(SacLosses {
        critic: critic_update(nets, batch, log_alpha.exp(), gamma, next_noise, bounds)?,
        actor: actor_update(nets, batch.obs, log_alpha, pi_noise, bounds)?,
    })
}

pub fn train(config: &Config, run: &mut RunHandle) -> Result<FinalReport> {
    config.validate()?;
    let _ftz = FlushDenormals::new();
    let (act_dim, low, high) = continuous_bounds(AlgoId::Sac, &config.env_id)?;
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
    actor_sizes.push(2 * act_dim);
    let mut critic_sizes = vec![obs_dim + act_dim];
    critic_sizes.extend(&config.hidden_sizes);
    critic_sizes.push(1);
    let mut actor = Mlp::<f32>::fan_in_uniform(&actor_sizes, Activation::Relu, Activation::Identity, &mut init_rng)?;
    let mut qf1 = Mlp::<f32>::fan_in_uniform(&critic_sizes, Activation::Relu, Activation::Identity, &mut init_rng)?;
    let mut qf2 = Mlp::<f32>::fan_in_uniform(&critic_sizes, Activation::Relu, Activation::Identity, &mut init_rng)?;
    let mut qf1_target = qf1.clone();
    let mut qf2_target = qf2.clone();
    let mut actor_opt = AdamState::for_mlp(&actor, AdamConfig::new(config.policy_lr));
    let mut q1_opt = AdamState::for_mlp(&qf1, AdamConfig::new(config.q_lr));
    let mut q2_opt = AdamState::for_mlp(&qf2, AdamConfig::new(config.q_lr));
    let mut log_alpha = vec![config.initial_log_alpha];
    let mut alpha_opt = AdamState::<f64>::new(&[1], AdamConfig::new(config.alpha_lr));
    let mut rb = ReplayBuffer::new(config.buffer_size, obs_dim, act_dim)?;

    let mut episodes = EpisodeLog::default();
    let mut obs = envs.observations()[0].clone();
    let draw = |rng: &mut Rng, n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..act_dim).map(|_| rng.normal()).collect()).collect()
    };

    for global_step in 0..config.total_timesteps {
        let step_count = global_step + 1;
        let action: Vec<f64> = if global_step < config.learning_starts {
            (0..act_dim).map(|_| explore_rng.uniform_range(low, high)).collect()
        } else {
            let head = actor.predict(&rows_to_matrix(&[&obs]))?;
            let sample = &sample_policy(&actor, &head, &draw(&mut explore_rng, 1))[0];
            sample
                .action
                .iter()
                .map(|a| (a * bounds.scale() + bounds.bias()).clamp(low, high))
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
            let sampled = rb.sample(config.batch_size, &mut replay_rng)?;
            let rewards: Vec<f64> = sampled.rewards.iter().map(|&r| r as f64).collect();
            let batch = SacBatch {
                obs: &sampled.obs,
                actions: &sampled.actions,
                rewards: &rewards,
                terminated: &sampled.terminated,
                next_obs: &sampled.next_obs,
            };
            let alpha = log_alpha[0].exp();
            let critic = critic_update(
                &SacNets {
                    actor: &actor,
                    q1: &qf1,
                    q2: &qf2,
                    q1_target: &qf1_target,
                    q2_target: &qf2_target,
                },
                &batch,
                alpha,
                config.gamma,
                &draw(&mut policy_rng, config.batch_size),
                bounds,
            )?;
            adam_step(&mut qf1, &critic.q1_grads, &mut q1_opt)?;
            adam_step(&mut qf2, &critic.q2_grads, &mut q2_opt)?;

            let pi = actor_update(
                &SacNets {
                    actor: &actor,
                    q1: &qf1,
                    q2: &qf2,
                    q1_target: &qf1_target,
                    q2_target: &qf2_target,
                },
                batch.obs,
                log_alpha[0],
                &draw(&mut policy_rng, config.batch_size),
                bounds,
            )?;
            adam_step(&mut actor, &pi.actor_grads, &mut actor_opt)?;
            if config.autotune {
                alpha_opt.step_slices(vec![&mut log_alpha], &[&[pi.alpha_grad]])?;
            }
            polyak_update(&mut qf1_target, &qf1, config.tau)?;
            polyak_update(&mut qf2_target, &qf2, config.tau)?;

            if global_step % 100 == 0 {
                run.log_metric(step_count, keys::QF1_LOSS, critic.qf1_loss)?;
                run.log_metric(step_count, keys::QF2_LOSS, critic.qf2_loss)?;
                run.log_metric(step_count, keys::QF_LOSS, (critic.qf1_loss + critic.qf2_loss) / 2.0)?;
                run.log_metric(step_count, keys::ACTOR_LOSS, pi.actor_loss)?;
                run.log_metric(step_count, keys::ALPHA, alpha)?;
                if config.autotune {
                    run.log_metric(step_count, keys::ALPHA_LOSS, pi.alpha_loss)?;
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
                ("qf1_target".into(), qf1_target),
                ("qf2_target".into(), qf2_target),
            ],
            tensors: vec![("log_alpha".into(), vec![log_alpha[0] as f32])],
        },
    )?;
    Ok(episodes.report(run.dir(), config.total_timesteps))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixture {
        actor: Mlp<f64>,
        q1: Mlp<f64>,
        q2: Mlp<f64>,
        obs: Matrix<f64>,
        actions: Matrix<f64>,
        next_obs: Matrix<f64>,
        noise: Vec<Vec<f64>>,
    }

    fn fixture() -> Fixture {
        let mut rng = Rng::new(11);
        let mut net =
            |sizes: &[usize]| Mlp::fan_in_uniform(sizes, Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let actor = net(&[3, 6, 2]);
        let q1 = net(&[4, 6, 1]);
        let q2 = net(&[4, 6, 1]);
        let mut rng = Rng::new(12);
        let mut m = |r, c| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap();
        let (obs, actions, next_obs) = (m(4, 3), m(4, 1), m(4, 3));
        let noise = (0..4).map(|_| vec![rng.normal()]).collect();
        Fixture {
            actor,
            q1,
            q2,
            obs,
            actions,
            next_obs,
            noise,
        }
    }

    #[test]
    fn zero_alpha_gives_twin_min_target() {
        let f = fixture();
        let nets = SacNets {
            actor: &f.actor,
            q1: &f.q1,
            q2: &f.q2,
            q1_target: &f.q1,
            q2_target: &f.q2,
        };
        let r = [1.0, 0.0, -1.0, 2.0];
        let d = [false, false, true, false];
        let batch = SacBatch {
            obs: &f.obs,
            actions: &f.actions,
            rewards: &r,
            terminated: &d,
            next_obs: &f.next_obs,
        };
        let b = ActionBounds { low: -2.0, high: 2.0 };
        let out = critic_update(&nets, &batch, 0.0, 0.9, &f.noise, b).unwrap();
        let next = sample_policy(&f.actor, &f.actor.predict(&f.next_obs).unwrap(), &f.noise);
        let input = f.next_obs.hcat(&scaled_actions(&next, b)).unwrap();
        let (q1, q2) = (f.q1.predict(&input).unwrap(), f.q2.predict(&input).unwrap());
        for i in 0..4 {
            let boot = if d[i] { 0.0 } else { 0.9 * q1[(i, 0)].min(q2[(i, 0)]) };
            assert!((out.targets[i] - (r[i] + boot)).abs() < 1e-12);
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let f = fixture();
        let b = ActionBounds { low: -2.0, high: 2.0 };
        let log_alpha = -0.7;
        let loss_at = |actor: &Mlp<f64>| {
            let nets = SacNets {
                actor,
                q1: &f.q1,
                q2: &f.q2,
                q1_target: &f.q1,
                q2_target: &f.q2,
            };
            actor_update(&nets, &f.obs, log_alpha, &f.noise, b).unwrap()
        };
        let analytic = loss_at(&f.actor).actor_grads;
        let flat: Vec<f64> = analytic.slices().concat();
        let base = f.actor.flat_params();
        let h = 1e-6;
        for k in 0..base.len() {
            let shifted = |delta: f64| {
                let mut p = base.clone();
                p[k] += delta;
                let net = Mlp::from_specs(&f.actor.specs(), &p).unwrap();
                loss_at(&net).actor_loss
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            assert!(
                (fd - flat[k]).abs() < 1e-5 * (1.0 + fd.abs()),
                "param {k}: fd {fd} vs {}",
                flat[k]
            );
        }
    }
}
