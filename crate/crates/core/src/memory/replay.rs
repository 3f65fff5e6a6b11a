use crate::nn::Matrix;
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub obs: &'a [f32],
    pub action: &'a [f32],
    pub reward: f32,
    /// True successor, even when the environment auto-reset.
    pub next_obs: &'a [f32],
    pub terminated: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBatch {
    pub obs: Matrix<f32>,
    pub actions: Matrix<f32>,
    pub rewards: Vec<f32>,
    pub next_obs: Matrix<f32>,
    pub terminated: Vec<bool>,
    pub indices: Vec<usize>,
}

/// FIFO ring buffer with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    next_obs: Vec<f32>,
    terminated: Vec<bool>,
    size: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            obs: vec![0.0; capacity * obs_dim],
            actions: vec![0.0; capacity * act_dim],
            rewards: vec![0.0; capacity],
            next_obs: vec![0.0; capacity * obs_dim],
            terminated: vec![false; capacity],
            size: 0,
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn add(&mut self, t: Transition<'_>) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim {
            return Err(Error::shape("ReplayBuffer::add obs", self.obs_dim, t.obs.len()));
        }
        if t.action.len() != self.act_dim {
            return Err(Error::shape("ReplayBuffer::add action", self.act_dim, t.action.len()));
        }
        let i = self.cursor;
        let (od, ad) = (self.obs_dim, self.act_dim);
        self.obs[i * od..(i + 1) * od].copy_from_slice(t.obs);
        self.next_obs[i * od..(i + 1) * od].copy_from_slice(t.next_obs);
        self.actions[i * ad..(i + 1) * ad].copy_from_slice(t.action);
        self.rewards[i] = t.reward;
        self.terminated[i] = t.terminated;
        self.cursor = (self.cursor + 1) % self.capacity;
        self.size = (self.size + 1).min(self.capacity);
        Ok(())
    }

    /// Stored transition at ring slot `i` (`i < len()`).
    pub fn get(&self, i: usize) -> Transition<'_> {
        let (od, ad) = (self.obs_dim, self.act_dim);
        Transition {
            obs: &self.obs[i * od..(i + 1) * od],
            action: &self.actions[i * ad..(i + 1) * ad],
            reward: self.rewards[i],
            next_obs: &self.next_obs[i * od..(i + 1) * od],
            terminated: self.terminated[i],
        }
    }

    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<ReplayBatch> {
        if self.size == 0 {
            return Err(Error::InvalidArgument(
                "cannot sample from an empty replay buffer".into(),
            ));
        }
        let indices: Vec<usize> = (0..batch_size).map(|_| rng.below(self.size)).collect();
        let (od, ad) = (self.obs_dim, self.act_dim);
        let mut obs = Vec::with_capacity(batch_size * od);
        let mut next_obs = Vec::with_capacity(batch_size * od);
        let mut actions = Vec::with_capacity(batch_size * ad);
        let mut rewards = Vec::with_capacity(batch_size);
        let mut terminated = Vec::with_capacity(batch_size);
        for &i in &indices {
            let t = self.get(i);
            obs.extend_from_slice(t.obs);
            next_obs.extend_from_slice(t.next_obs);
            actions.extend_from_slice(t.action);
            rewards.push(t.reward);
            terminated.push(t.terminated);
        }
        Ok(ReplayBatch {
            obs: Matrix::from_vec(batch_size, od, obs)?,
            actions: Matrix::from_vec(batch_size, ad, actions)?,
            rewards,
            next_obs: Matrix::from_vec(batch_size, od, next_obs)?,
            terminated,
            indices,
        })
    }
}
