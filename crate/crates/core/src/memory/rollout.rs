use crate::nn::Matrix;
use crate::{Error, Result, Rng};

/// One synchronous step of `N` environments, as written into the buffer.
///
/// `terminated[n]`/`truncated[n]` describe the transition *out of* `obs`;
/// `bootstrap_values[n]` is `V(true successor)` and only read when the
/// transition was truncated.
#[derive(Debug, Clone, Copy)]
pub struct RolloutStep<'a> {
    pub obs: &'a [f32],
    pub actions: &'a [f32],
    pub log_probs: &'a [f64],
    pub values: &'a [f64],
    pub rewards: &'a [f64],
    pub terminated: &'a [bool],
    pub truncated: &'a [bool],
    pub bootstrap_values: &'a [f64],
    pub masks: Option<&'a [bool]>,
}

/// Fixed-size `T × N` on-policy storage, flattened step-major
/// (`index = t * N + n`).
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    num_steps: usize,
    num_envs: usize,
    obs_dim: usize,
    act_dim: usize,
    mask_dim: usize,
    pub obs: Vec<f32>,
    pub actions: Vec<f32>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub bootstrap_values: Vec<f64>,
    pub masks: Vec<bool>,
    filled: usize,
}

impl RolloutBuffer {
    /// `mask_dim` is 0 for unmasked action spaces.
    pub fn new(num_steps: usize, num_envs: usize, obs_dim: usize, act_dim: usize, mask_dim: usize) -> Self {
        let n = num_steps * num_envs;
        Self {
            num_steps,
            num_envs,
            obs_dim,
            act_dim,
            mask_dim,
            obs: vec![0.0; n * obs_dim],
            actions: vec![0.0; n * act_dim],
            log_probs: vec![0.0; n],
            values: vec![0.0; n],
            rewards: vec![0.0; n],
            terminated: vec![false; n],
            truncated: vec![false; n],
            bootstrap_values: vec![0.0; n],
            masks: vec![false; n * mask_dim],
            filled: 0,
        }
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn num_envs(&self) -> usize {
        self.num_envs
    }

    pub fn len(&self) -> usize {
        self.num_steps * self.num_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn filled(&self) -> usize {
        self.filled
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.num_steps
    }

    pub fn clear(&mut self) {
        self.filled = 0;
    }

    pub fn push(&mut self, step: RolloutStep<'_>) -> Result<()> {
        if self.is_full() {
            return Err(Error::InvalidArgument("rollout buffer is full".into()));
        }
        let n = self.num_envs;
        let checks = [
            ("obs", step.obs.len(), n * self.obs_dim),
            ("actions", step.actions.len(), n * self.act_dim),
            ("log_probs", step.log_probs.len(), n),
            ("values", step.values.len(), n),
            ("rewards", step.rewards.len(), n),
            ("terminated", step.terminated.len(), n),
            ("truncated", step.truncated.len(), n),
            ("bootstrap_values", step.bootstrap_values.len(), n),
            ("masks", step.masks.map_or(0, <[bool]>::len), n * self.mask_dim),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Shape {
                    context: "RolloutBuffer::push",
                    expected: format!("{want} {name}"),
                    actual: got.to_string(),
                });
            }
        }
        let t = self.filled;
        let at = |dim: usize| t * n * dim..(t + 1) * n * dim;
        self.obs[at(self.obs_dim)].copy_from_slice(step.obs);
        self.actions[at(self.act_dim)].copy_from_slice(step.actions);
        self.log_probs[at(1)].copy_from_slice(step.log_probs);
        self.values[at(1)].copy_from_slice(step.values);
        self.rewards[at(1)].copy_from_slice(step.rewards);
        self.terminated[at(1)].copy_from_slice(step.terminated);
        self.truncated[at(1)].copy_from_slice(step.truncated);
        self.bootstrap_values[at(1)].copy_from_slice(step.bootstrap_values);
        if let Some(m) = step.masks {
            self.masks[at(self.mask_dim)].copy_from_slice(m);
        }
        self.filled += 1;
        Ok(())
    }

    /// Advantages and returns (`advantages + values`), flattened step-major.
    pub fn compute_gae(&self, last_values: &[f64], gamma: f64, lam: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.is_full() {
            return Err(Error::BufferNotFull {
                filled: self.filled,
                capacity: self.num_steps,
            });
        }
        compute_gae(
            &self.rewards,
            &self.values,
            &self.terminated,
            &self.truncated,
            &self.bootstrap_values,
            last_values,
            self.num_envs,
            gamma,
            lam,
        )
    }

    /// Observation rows at `indices`.
    pub fn obs_rows(&self, indices: &[usize]) -> Matrix<f32> {
        gather(&self.obs, self.obs_dim, indices)
    }

    pub fn action_rows(&self, indices: &[usize]) -> Matrix<f32> {
        gather(&self.actions, self.act_dim, indices)
    }

    pub fn mask_row(&self, index: usize) -> &[bool] {
        &self.masks[index * self.mask_dim..(index + 1) * self.mask_dim]
    }
}

fn gather(data: &[f32], dim: usize, indices: &[usize]) -> Matrix<f32> {
    let mut out = Vec::with_capacity(indices.len() * dim);
    for &i in indices {
        out.extend_from_slice(&data[i * dim..(i + 1) * dim]);
    }
    Matrix::from_vec(indices.len(), dim, out).expect("gather shape")
}

/// Generalized advantage estimation over step-major `T × N` arrays.
///
/// For transition `t` of env `n`, with `V'` the value of the true successor
/// (`values[t+1]`, `last_values` at the final step, or `bootstrap_values[t]`
/// when the transition was truncated):
///
/// ```text
/// δ_t = r_t + γ · (1 − terminated_t) · V' − V(s_t)
/// A_t = δ_t + γλ · (1 − terminated_t) · (1 − truncated_t) · A_{t+1}
/// ```
///
/// so terminations zero the bootstrap and any episode end stops the
/// advantage from leaking into the next episode.
#[allow(clippy::too_many_arguments)]
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    bootstrap_values: &[f64],
    last_values: &[f64],
    num_envs: usize,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lam) {
        return Err(Error::InvalidArgument(format!(
            "gamma and lambda must lie in [0, 1], got {gamma}, {lam}"
        )));
    }
    let len = rewards.len();
    if num_envs == 0 || !len.is_multiple_of(num_envs) {
        return Err(Error::shape("compute_gae", format!("multiple of {num_envs}"), len));
    }
    for (name, l) in [
        ("values", values.len()),
        ("terminated", terminated.len()),
        ("truncated", truncated.len()),
        ("bootstrap_values", bootstrap_values.len()),
    ] {
        if l != len {
            return Err(Error::Shape {
                context: "compute_gae",
                expected: format!("{len} {name}"),
                actual: l.to_string(),
            });
        }
    }
    if last_values.len() != num_envs {
        return Err(Error::shape("compute_gae last_values", num_envs, last_values.len()));
    }

    let steps = len / num_envs;
    let mut advantages = vec![0.0; len];
    for n in 0..num_envs {
        let mut next_adv = 0.0;
        for t in (0..steps).rev() {
            let i = t * num_envs + n;
            let next_value = if truncated[i] {
                bootstrap_values[i]
            } else if t + 1 == steps {
                last_values[n]
            } else {
                values[i + num_envs]
            };
            let nonterminal = if terminated[i] { 0.0 } else { 1.0 };
            let carry = if terminated[i] || truncated[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * nonterminal * next_value - values[i];
            next_adv = delta + gamma * lam * carry * next_adv;
            advantages[i] = next_adv;
        }
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shuffles `0..total` and splits it into `num_minibatches` equal parts.
pub fn minibatches(total: usize, num_minibatches: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if num_minibatches == 0 || !total.is_multiple_of(num_minibatches) {
        return Err(Error::InvalidArgument(format!(
            "{total} samples cannot be split into {num_minibatches} equal minibatches"
        )));
    }
    let mut idx: Vec<usize> = (0..total).collect();
    rng.shuffle(&mut idx);
    let size = total / num_minibatches;
    Ok(idx.chunks(size).map(<[usize]>::to_vec).collect())
}
