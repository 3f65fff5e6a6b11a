//! Loss and target computations shared by the training files.
//!
//! Everything here is scalar `f64` math over per-sample slices. Loss
//! functions also return the gradient of the scalar loss with respect to each
//! per-sample input, which the training files chain into `Mlp::backward`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `start + (end − start) · min(t / duration, 1)`.
pub fn linear_anneal(start: f64, end: f64, duration: u64, t: u64) -> f64 {
    if t >= duration {
        return end;
    }
    let frac = t as f64 / duration as f64;
    start + (end - start) * frac
}

/// Logit assigned to illegal actions.
pub const MASKED_LOGIT: f64 = -1e8;

/// Replaces logits of illegal actions with [`MASKED_LOGIT`].
pub fn apply_action_mask(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::shape("apply_action_mask", logits.len(), mask.len()));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::InvalidArgument("action mask has no legal action".into()));
    }
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&l, &legal)| if legal { l } else { MASKED_LOGIT })
        .collect())
}

/// Backward of [`apply_action_mask`]: masked logits receive no gradient.
pub fn mask_gradient(grad: &mut [f64], mask: &[bool]) {
    for (g, &legal) in grad.iter_mut().zip(mask) {
        if !legal {
            *g = 0.0;
        }
    }
}

/// In-place `(a − mean) / (std + 1e-8)` with the unbiased sample std.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n == 0 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

/// `1 − Var(returns − values) / Var(returns)`; NaN when returns are constant.
pub fn explained_variance(values: &[f64], returns: &[f64]) -> f64 {
    let n = returns.len() as f64;
    let var = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
    };
    let var_y = var(&mut returns.iter().copied());
    if var_y == 0.0 {
        return f64::NAN;
    }
    1.0 - var(&mut returns.iter().zip(values).map(|(r, v)| r - v)) / var_y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoLossConfig {
    pub clip_coef: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub clip_vloss: bool,
}

/// Rollout-time quantities of one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct PpoMinibatch<'a> {
    /// Already normalized when advantage normalization is on.
    pub advantages: &'a [f64],
    pub old_log_probs: &'a [f64],
    pub returns: &'a [f64],
    pub old_values: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoUpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub explained_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoLoss {
    pub total: f64,
    pub stats: PpoUpdateStats,
    /// `∂total / ∂new_log_probs[i]`
    pub d_log_probs: Vec<f64>,
    /// `∂total / ∂entropy[i]`
    pub d_entropy: Vec<f64>,
    /// `∂total / ∂new_values[i]`
    pub d_values: Vec<f64>,
}

/// Clipped-surrogate PPO loss:
///
/// ```text
/// ρ      = exp(logπ_new − logπ_old)
/// policy = mean(max(−ρA, −clip(ρ, 1−ε, 1+ε)A))
/// value  = mean(½ max((V−R)², (V_old + clip(V−V_old, −ε, ε) − R)²))   (clip_vloss)
///        = mean(½ (V−R)²)                                               (otherwise)
/// total  = policy − ent_coef · mean(entropy) + vf_coef · value
/// ```
pub fn ppo_loss(
    mb: &PpoMinibatch<'_>,
    new_log_probs: &[f64],
    entropy: &[f64],
    new_values: &[f64],
    cfg: &PpoLossConfig,
) -> Result<PpoLoss> {
    let n = mb.advantages.len();
    for (name, len) in [
        ("old_log_probs", mb.old_log_probs.len()),
        ("returns", mb.returns.len()),
        ("old_values", mb.old_values.len()),
        ("new_log_probs", new_log_probs.len()),
        ("entropy", entropy.len()),
        ("new_values", new_values.len()),
    ] {
        if len != n {
            return Err(Error::Shape {
                context: "ppo_loss",
                expected: format!("{n} {name}"),
                actual: len.to_string(),
            });
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("ppo_loss on an empty minibatch".into()));
    }
    let inv_n = 1.0 / n as f64;
    let eps = cfg.clip_coef;

    let mut policy = 0.0;
    let mut value = 0.0;
    let mut approx_kl = 0.0;
    let mut clipped = 0usize;
    let mut d_log_probs = Vec::with_capacity(n);
    let mut d_values = Vec::with_capacity(n);

    for i in 0..n {
        let a = mb.advantages[i];
        let log_ratio = new_log_probs[i] - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
        let pg1 = -a * ratio;
        let pg2 = -a * clipped_ratio;
        policy += pg1.max(pg2);
        // gradient flows through ρ unless the clipped branch is selected
        // with ρ outside the trust region
        let through = pg1 >= pg2 || (ratio >= 1.0 - eps && ratio <= 1.0 + eps);
        d_log_probs.push(if through { -a * ratio * inv_n } else { 0.0 });

        approx_kl += (ratio - 1.0) - log_ratio;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }

        let v = new_values[i];
        let r = mb.returns[i];
        let unclipped = (v - r) * (v - r);
        if cfg.clip_vloss {
            let v_old = mb.old_values[i];
            let delta = v - v_old;
            let v_clip = v_old + delta.clamp(-eps, eps);
            let clipped_sq = (v_clip - r) * (v_clip - r);
            value += 0.5 * unclipped.max(clipped_sq);
            let dv = if unclipped >= clipped_sq {
                v - r
            } else if delta.abs() < eps {
                v_clip - r
            } else {
                0.0
            };
            d_values.push(cfg.vf_coef * dv * inv_n);
        } else {
            value += 0.5 * unclipped;
            d_values.push(cfg.vf_coef * (v - r) * inv_n);
        }
    }
    policy *= inv_n;
    value *= inv_n;
    let mean_entropy = entropy.iter().sum::<f64>() * inv_n;
    let total = policy - cfg.ent_coef * mean_entropy + cfg.vf_coef * value;
    if !total.is_finite() {
        return Err(Error::NonFinite("ppo loss".into()));
    }
    Ok(PpoLoss {
        total,
        stats: PpoUpdateStats {
            policy_loss: policy,
            value_loss: value,
            entropy: mean_entropy,
            approx_kl: approx_kl * inv_n,
            clip_fraction: clipped as f64 * inv_n,
            explained_variance: explained_variance(new_values, mb.returns),
        },
        d_log_probs,
        d_entropy: vec![-cfg.ent_coef * inv_n; n],
        d_values,
    })
}

/// One-step Q-learning target `r + γ(1 − terminated) max_a q_next[a]`, with
/// `q_next` from the target network.
pub fn dqn_target(reward: f64, terminated: bool, gamma: f64, q_next: &[f64]) -> f64 {
    let max = q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    reward + if terminated { 0.0 } else { gamma * max }
}

/// Deterministic-policy target `r + γ(1 − terminated) Q'(s', μ'(s'))`.
pub fn ddpg_target(reward: f64, terminated: bool, gamma: f64, q_next: f64) -> f64 {
    reward + if terminated { 0.0 } else { gamma * q_next }
}

/// Target policy smoothing: `clip(μ'(s') + clip(σ·ε, −c, c)·scale, low, high)`
/// per action dimension, `ε` standard normal. Noise is expressed in units of
/// the normalized `[−1, 1]` action and rescaled by `action_scale`.
#[allow(clippy::too_many_arguments)]
pub fn td3_smoothed_action(
    mu_next: &[f64],
    standard_noise: &[f64],
    policy_noise: f64,
    noise_clip: f64,
    action_scale: f64,
    low: f64,
    high: f64,
) -> Vec<f64> {
    mu_next
        .iter()
        .zip(standard_noise)
        .map(|(&m, &e)| {
            let n = (policy_noise * e).clamp(-noise_clip, noise_clip) * action_scale;
            (m + n).clamp(low, high)
        })
        .collect()
}

/// Clipped double-Q target `r + γ(1 − terminated) min(Q1'(s', ã), Q2'(s', ã))`.
pub fn td3_target(reward: f64, terminated: bool, gamma: f64, q1_next: f64, q2_next: f64) -> f64 {
    reward + if terminated { 0.0 } else { gamma * q1_next.min(q2_next) }
}

/// Soft target `r + γ(1 − terminated)(min(Q1', Q2')(s', a') − α·logπ(a'|s'))`.
pub fn sac_target(
    reward: f64,
    terminated: bool,
    gamma: f64,
    q1_next: f64,
    q2_next: f64,
    alpha: f64,
    next_log_prob: f64,
) -> f64 {
    reward
        + if terminated {
            0.0
        } else {
            gamma * (q1_next.min(q2_next) - alpha * next_log_prob)
        }
}

/// `mean(−log α · (logπ + H_target))` and its derivative in `log α`.
pub fn sac_alpha_loss(log_alpha: f64, log_probs: &[f64], target_entropy: f64) -> (f64, f64) {
    let n = log_probs.len() as f64;
    let mean_term = log_probs.iter().map(|lp| lp + target_entropy).sum::<f64>() / n;
    (-log_alpha * mean_term, -mean_term)
}

/// Mean squared error `mean((pred − target)²)` and `∂/∂pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            loss += (p - t) * (p - t);
            2.0 * (p - t) / n
        })
        .collect();
    (loss / n, grad)
}

/// Fixed categorical support `z_i = v_min + i·Δz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C51Support {
    pub v_min: f64,
    pub v_max: f64,
    pub n_atoms: usize,
    pub atoms: Vec<f64>,
}

impl C51Support {
    pub fn new(v_min: f64, v_max: f64, n_atoms: usize) -> Result<Self> {
        if n_atoms < 2 {
            return Err(Error::InvalidArgument(format!("n_atoms must be >= 2, got {n_atoms}")));
        }
        if !(v_max > v_min) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need v_min < v_max, got [{v_min}, {v_max}]"
            )));
        }
        let dz = (v_max - v_min) / (n_atoms - 1) as f64;
        let atoms = (0..n_atoms).map(|i| v_min + i as f64 * dz).collect();
        Ok(Self {
            v_min,
            v_max,
            n_atoms,
            atoms,
        })
    }

    pub fn delta_z(&self) -> f64 {
        (self.v_max - self.v_min) / (self.n_atoms - 1) as f64
    }

    /// `Σ p_i z_i`
    pub fn expectation(&self, probs: &[f64]) -> f64 {
        probs.iter().zip(&self.atoms).map(|(p, z)| p * z).sum()
    }
}

/// Projects the Bellman-shifted distribution back onto the fixed support.
///
/// Each atom `z_j` moves to `Tz_j = clip(r + γ(1 − terminated)z_j, v_min,
/// v_max)`, at fractional index `b = (Tz_j − v_min)/Δz`; its mass is split
/// between `floor(b)` and `ceil(b)` in proportion to proximity, all of it
/// going to one atom when `b` is integral.
pub fn c51_project(
    support: &C51Support,
    next_dist: &[f64],
    reward: f64,
    terminated: bool,
    gamma: f64,
) -> Result<Vec<f64>> {
    if next_dist.len() != support.n_atoms {
        return Err(Error::shape("c51_project", support.n_atoms, next_dist.len()));
    }
    let total: f64 = next_dist.iter().sum();
    if (total - 1.0).abs() > 1e-6 || next_dist.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "next distribution must be a probability vector (sums to {total})"
        )));
    }
    let dz = support.delta_z();
    let last = (support.n_atoms - 1) as f64;
    let discount = if terminated { 0.0 } else { gamma };
    let mut out = vec![0.0; support.n_atoms];
    for (&z, &p) in support.atoms.iter().zip(next_dist) {
        let tz = (reward + discount * z).clamp(support.v_min, support.v_max);
        let b = ((tz - support.v_min) / dz).clamp(0.0, last);
        let l = b.floor();
        let u = b.ceil();
        if l == u {
            out[l as usize] += p;
        } else {
            out[l as usize] += p * (u - b);
            out[u as usize] += p * (b - l);
        }
    }
    Ok(out)
}

/// Cross-entropy `−Σ target·log softmax(logits)` and `∂/∂logits`.
pub fn cross_entropy_with_logits(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(target)
        .map(|(&l, &t)| {
            let log_p = l - lse;
            loss -= t * log_p;
            log_p.exp() - t
        })
        .collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Categorical;

    #[test]
    fn anneal_examples() {
        assert_eq!(linear_anneal(1.0, 0.05, 100, 0), 1.0);
        assert_eq!(linear_anneal(1.0, 0.05, 100, 100), 0.05);
        assert!((linear_anneal(1.0, 0.05, 100, 50) - 0.525).abs() < 1e-15);
        assert_eq!(linear_anneal(1.0, 0.05, 100, 1000), 0.05);
    }

    #[test]
    fn mask_identity_and_single_legal() {
        let logits = [0.3, -1.0, 2.0];
        assert_eq!(apply_action_mask(&logits, &[true; 3]).unwrap(), logits.to_vec());
        let masked = apply_action_mask(&logits, &[false, true, false]).unwrap();
        let c = Categorical::from_logits(&masked).unwrap();
        assert!((c.probs()[1] - 1.0).abs() < 1e-12);
        assert!(c.entropy().abs() < 1e-12);
        assert!(c.probs()[0] < 1e-30 && c.probs()[2] < 1e-30);
        assert!(apply_action_mask(&logits, &[false; 3]).is_err());
    }

    #[test]
    fn masked_logit_gets_no_gradient() {
        let logits = [0.5, 1.5, -0.2, 0.0];
        let mask = [true, false, true, true];
        let masked = apply_action_mask(&logits, &mask).unwrap();
        let c = Categorical::from_logits(&masked).unwrap();
        // d(log π(a) + 0.01 H)/d logits, then through the mask
        let mut g: Vec<f64> = c
            .grad_log_prob(2)
            .iter()
            .zip(c.grad_entropy())
            .map(|(a, b)| a + 0.01 * b)
            .collect();
        assert!(g[1].abs() < 1e-20);
        mask_gradient(&mut g, &mask);
        assert_eq!(g[1], 0.0);
    }

    fn mb<'a>(adv: &'a [f64], old: &'a [f64], ret: &'a [f64], vold: &'a [f64]) -> PpoMinibatch<'a> {
        PpoMinibatch {
            advantages: adv,
            old_log_probs: old,
            returns: ret,
            old_values: vold,
        }
    }

    const CFG: PpoLossConfig = PpoLossConfig {
        clip_coef: 0.2,
        ent_coef: 0.01,
        vf_coef: 0.5,
        clip_vloss: true,
    };

    #[test]
    fn unit_ratio() {
        let adv = [1.0, -2.0, 0.5];
        let lp = [-0.3, -1.2, -0.7];
        let ret = [0.0; 3];
        let out = ppo_loss(&mb(&adv, &lp, &ret, &ret), &lp, &[0.0; 3], &ret, &CFG).unwrap();
        assert!((out.stats.policy_loss + adv.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert_eq!(out.stats.approx_kl, 0.0);
        assert_eq!(out.stats.clip_fraction, 0.0);
    }

    #[test]
    fn clip_binds() {
        let old = [0.0];
        let new = [1.5f64.ln()];
        let out = ppo_loss(&mb(&[1.0], &old, &[0.0], &[0.0]), &new, &[0.0], &[0.0], &CFG).unwrap();
        assert!((out.stats.policy_loss + 1.2).abs() < 1e-12);
        assert_eq!(out.stats.clip_fraction, 1.0);
        assert_eq!(out.d_log_probs[0], 0.0);
    }

    /// Straight-line re-implementation of the total loss.
    #[allow(clippy::too_many_arguments)]
    fn oracle_total(
        adv: &[f64],
        old: &[f64],
        ret: &[f64],
        vold: &[f64],
        new: &[f64],
        ent: &[f64],
        v: &[f64],
        c: &PpoLossConfig,
    ) -> f64 {
        let n = adv.len() as f64;
        let mut pg = 0.0;
        let mut vl = 0.0;
        for i in 0..adv.len() {
            let r = (new[i] - old[i]).exp();
            let rc = r.max(1.0 - c.clip_coef).min(1.0 + c.clip_coef);
            pg += f64::max(-adv[i] * r, -adv[i] * rc);
            let a = (v[i] - ret[i]).powi(2);
            if c.clip_vloss {
                let vc = vold[i] + (v[i] - vold[i]).max(-c.clip_coef).min(c.clip_coef);
                vl += 0.5 * f64::max(a, (vc - ret[i]).powi(2));
            } else {
                vl += 0.5 * a;
            }
        }
        pg / n - c.ent_coef * ent.iter().sum::<f64>() / n + c.vf_coef * vl / n
    }

    #[test]
    fn random_minibatch_matches_oracle_and_finite_differences() {
        let mut rng = crate::Rng::new(12);
        for clip_vloss in [true, false] {
            let cfg = PpoLossConfig { clip_vloss, ..CFG };
            let n = 16;
            let g = |rng: &mut crate::Rng, s: f64| (0..n).map(|_| s * rng.normal()).collect::<Vec<f64>>();
            let adv = g(&mut rng, 1.0);
            let old = g(&mut rng, 0.5);
            let new: Vec<f64> = old.iter().map(|o| o + 0.3 * rng.normal()).collect();
            let ent: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let ret = g(&mut rng, 2.0);
            let vold = g(&mut rng, 2.0);
            let v: Vec<f64> = vold.iter().map(|o| o + 0.3 * rng.normal()).collect();
            let out = ppo_loss(&mb(&adv, &old, &ret, &vold), &new, &ent, &v, &cfg).unwrap();
            let want = oracle_total(&adv, &old, &ret, &vold, &new, &ent, &v, &cfg);
            assert!((out.total - want).abs() < 1e-6);

            let h = 1e-7;
            for i in 0..n {
                let mut up = new.clone();
                up[i] += h;
                let mut dn = new.clone();
                dn[i] -= h;
                let fd = (oracle_total(&adv, &old, &ret, &vold, &up, &ent, &v, &cfg)
                    - oracle_total(&adv, &old, &ret, &vold, &dn, &ent, &v, &cfg))
                    / (2.0 * h);
                assert!((fd - out.d_log_probs[i]).abs() < 1e-6, "logp {i}");
                let mut up = v.clone();
                up[i] += h;
                let mut dn = v.clone();
                dn[i] -= h;
                let fd = (oracle_total(&adv, &old, &ret, &vold, &new, &ent, &up, &cfg)
                    - oracle_total(&adv, &old, &ret, &vold, &new, &ent, &dn, &cfg))
                    / (2.0 * h);
                assert!((fd - out.d_values[i]).abs() < 1e-6, "value {i}");
            }
        }
    }

    #[test]
    fn infinite_clip_is_vanilla_surrogate() {
        let mut rng = crate::Rng::new(3);
        let n = 32;
        let adv: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let old: Vec<f64> = (0..n).map(|_| -rng.uniform()).collect();
        let new: Vec<f64> = old.iter().map(|o| o + 0.5 * rng.normal()).collect();
        let cfg = PpoLossConfig {
            clip_coef: f64::INFINITY,
            ..CFG
        };
        let z = vec![0.0; n];
        let out = ppo_loss(&mb(&adv, &old, &z, &z), &new, &z, &z, &cfg).unwrap();
        let vanilla = -adv
            .iter()
            .zip(&new)
            .zip(&old)
            .map(|((a, n), o)| a * (n - o).exp())
            .sum::<f64>()
            / n as f64;
        assert!((out.stats.policy_loss - vanilla).abs() < 1e-6);
    }

    #[test]
    fn advantage_normalization() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        let var: f64 = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dqn_target_cases() {
        assert_eq!(dqn_target(1.5, true, 0.99, &[3.0, 4.0]), 1.5);
        assert_eq!(dqn_target(1.5, false, 0.0, &[3.0, 4.0]), 1.5);
        let mut rng = crate::Rng::new(1);
        for _ in 0..100 {
            let q: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let r = rng.normal();
            let mut best = q[0];
            for &v in &q {
                if v > best {
                    best = v;
                }
            }
            assert_eq!(dqn_target(r, false, 0.9, &q), r + 0.9 * best);
        }
    }

    #[test]
    fn ddpg_and_td3_targets() {
        assert_eq!(ddpg_target(2.0, true, 0.99, 5.0), 2.0);
        assert_eq!(ddpg_target(2.0, false, 0.0, 5.0), 2.0);
        assert_eq!(td3_target(1.0, false, 0.5, 3.0, 2.0), 2.0);
        assert_eq!(
            td3_target(1.0, false, 0.5, 3.0, 2.0),
            td3_target(1.0, false, 0.5, 2.0, 3.0)
        );
        assert_eq!(td3_target(1.0, false, 0.5, 3.0, 3.0), ddpg_target(1.0, false, 0.5, 3.0));
        // zero noise scale: the target action is exactly the clipped target policy
        let a = td3_smoothed_action(&[1.9, -2.5], &[0.8, -0.3], 0.0, 0.5, 2.0, -2.0, 2.0);
        assert_eq!(a, vec![1.9, -2.0]);
        // noise is clipped before scaling
        let a = td3_smoothed_action(&[0.0], &[10.0], 0.2, 0.5, 2.0, -2.0, 2.0);
        assert_eq!(a, vec![1.0]);
    }

    #[test]
    fn sac_target_with_zero_alpha_is_twin_min() {
        assert_eq!(
            sac_target(1.0, false, 0.9, 2.0, 3.0, 0.0, -7.0),
            td3_target(1.0, false, 0.9, 2.0, 3.0)
        );
        assert_eq!(sac_target(1.0, true, 0.9, 2.0, 3.0, 0.2, -7.0), 1.0);
    }

    #[test]
    fn alpha_loss_is_stationary_at_target_entropy() {
        let h = -1.0;
        let lps = [0.5, 1.5, 1.0];
        let (_, grad) = sac_alpha_loss(0.3, &lps, h);
        assert!(grad.abs() < 1e-15);
        let (_, grad) = sac_alpha_loss(0.3, &[2.0, 2.0], h);
        assert!(grad < 0.0); // too little entropy: raise alpha
    }

    #[test]
    fn support_is_evenly_spaced() {
        let s = C51Support::new(-100.0, 100.0, 101).unwrap();
        assert_eq!(s.atoms[0], -100.0);
        assert_eq!(s.atoms[100], 100.0);
        assert!(s.atoms.windows(2).all(|w| (w[1] - w[0] - 2.0).abs() < 1e-12));
        assert!(C51Support::new(0.0, 1.0, 1).is_err());
        assert!(C51Support::new(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn projection_examples() {
        let s = C51Support::new(0.0, 2.0, 3).unwrap();
        let p = c51_project(&s, &[0.2, 0.3, 0.5], 0.5, false, 0.0).unwrap();
        assert_eq!(p, vec![0.5, 0.5, 0.0]);
        let p = c51_project(&s, &[0.2, 0.3, 0.5], 2.0, true, 0.99).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 1.0]);
        assert!(c51_project(&s, &[0.2, 0.3, 0.6], 0.0, false, 0.9).is_err());
    }

    #[test]
    fn cross_entropy_gradient() {
        let logits = [0.1, -0.4, 1.2];
        let target = [0.2, 0.5, 0.3];
        let (loss, g) = cross_entropy_with_logits(&logits, &target);
        let h = 1e-6;
        for i in 0..3 {
            let mut up = logits;
            up[i] += h;
            let mut dn = logits;
            dn[i] -= h;
            let fd =
                (cross_entropy_with_logits(&up, &target).0 - cross_entropy_with_logits(&dn, &target).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
        assert!(loss > 0.0);
    }

    #[test]
    fn mse_gradient() {
        let (l, g) = mse_loss(&[1.0, 3.0], &[0.0, 1.0]);
        assert_eq!(l, 2.5);
        assert_eq!(g, vec![1.0, 2.0]);
    }
}
