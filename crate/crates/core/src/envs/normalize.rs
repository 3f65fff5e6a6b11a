//! Running statistics and the observation/reward normalizers built on them.

use crate::{Error, Result};

pub const NORM_EPS: f64 = 1e-8;
pub const NORM_CLIP: f64 = 10.0;

/// Per-dimension running mean and (population) variance.
///
/// Batches are merged with the parallel update of Chan et al.: the
/// accumulator stores `(count, mean, var)` and `M2 = var · count`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMeanVar {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningMeanVar {
    /// Empty accumulator: count 0, mean 0, var 1.
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Folds a batch of rows into the accumulator.
    pub fn update<R: AsRef<[f64]>>(&mut self, batch: &[R]) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let dim = self.dim();
        let n = batch.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in batch {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::shape("RunningMeanVar::update", dim, row.len()));
            }
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in batch {
            for ((v, &x), &m) in var.iter_mut().zip(row.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        self.merge(&RunningMeanVar { count: n, mean, var })
    }

    pub fn merge(&mut self, other: &RunningMeanVar) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::shape("RunningMeanVar::merge", self.dim(), other.dim()));
        }
        if other.count == 0.0 {
            return Ok(());
        }
        if self.count == 0.0 {
            *self = other.clone();
            return Ok(());
        }
        let total = self.count + other.count;
        for i in 0..self.dim() {
            let delta = other.mean[i] - self.mean[i];
            let m2 = self.var[i] * self.count
                + other.var[i] * other.count
                + delta * delta * self.count * other.count / total;
            self.mean[i] += delta * other.count / total;
            self.var[i] = (m2 / total).max(0.0);
        }
        self.count = total;
        Ok(())
    }
}

/// `clip((obs − mean) / sqrt(var + 1e-8), −10, 10)`.
pub fn normalize_obs(acc: &RunningMeanVar, obs: &[f64]) -> Vec<f64> {
    obs.iter()
        .zip(&acc.mean)
        .zip(&acc.var)
        .map(|((&x, &m), &v)| ((x - m) / (v + NORM_EPS).sqrt()).clamp(-NORM_CLIP, NORM_CLIP))
        .collect()
}

/// Observation normalizer: every batch of observations first updates the
/// statistics, then is normalized with them.
#[derive(Debug, Clone)]
pub struct ObsNormalizer {
    pub rms: RunningMeanVar,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            rms: RunningMeanVar::new(dim),
        }
    }

    pub fn update_and_normalize(&mut self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.rms.update(batch)?;
        Ok(batch.iter().map(|o| normalize_obs(&self.rms, o)).collect())
    }

    /// Normalizes without touching the statistics.
    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        normalize_obs(&self.rms, obs)
    }
}

/// Reward scaling by the running std of the discounted return.
///
/// Per env: `R ← γR + r`; the scalar statistics are updated with the batch of
/// `R` values and each reward is emitted as `clip(r / sqrt(var + 1e-8), ±10)`.
/// `R` restarts at zero after an episode ends.
#[derive(Debug, Clone)]
pub struct RewardNormalizer {
    pub gamma: f64,
    pub returns: Vec<f64>,
    pub rms: RunningMeanVar,
}

impl RewardNormalizer {
    pub fn new(num_envs: usize, gamma: f64) -> Self {
        Self {
            gamma,
            returns: vec![0.0; num_envs],
            rms: RunningMeanVar::new(1),
        }
    }

    pub fn normalize(&mut self, rewards: &[f64], episode_ended: &[bool]) -> Result<Vec<f64>> {
        if rewards.len() != self.returns.len() || episode_ended.len() != self.returns.len() {
            return Err(Error::shape("RewardNormalizer", self.returns.len(), rewards.len()));
        }
        for (ret, &r) in self.returns.iter_mut().zip(rewards) {
            *ret = self.gamma * *ret + r;
        }
        let rows: Vec<[f64; 1]> = self.returns.iter().map(|&r| [r]).collect();
        self.rms.update(&rows)?;
        let scale = (self.rms.var[0] + NORM_EPS).sqrt();
        for (ret, &done) in self.returns.iter_mut().zip(episode_ended) {
            if done {
                *ret = 0.0;
            }
        }
        Ok(rewards
            .iter()
            .map(|&r| (r / scale).clamp(-NORM_CLIP, NORM_CLIP))
            .collect())
    }
}
