use super::{make_env, Action, ActionSpace, Env, EnvStep, EpisodeInfo};
use crate::rng::tags;
use crate::{Error, Result, Rng};

/// Result of one synchronous step over all instances.
///
/// For a slot whose episode ended, `obs` already holds the first observation
/// of the next episode while `rewards`/`terminated`/`truncated` describe the
/// finished transition and `final_obs` carries its true successor.
#[derive(Debug, Clone, PartialEq)]
pub struct VecStep {
    pub obs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub infos: Vec<Option<EpisodeInfo>>,
    pub final_obs: Vec<Option<Vec<f64>>>,
}

/// `N` synchronized instances of one environment with auto-reset.
pub struct VecEnv {
    envs: Vec<Box<dyn Env>>,
    rngs: Vec<Rng>,
    obs: Vec<Vec<f64>>,
    episode_returns: Vec<f64>,
    episode_lengths: Vec<u64>,
}

impl std::fmt::Debug for VecEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VecEnv")
            .field("env", &self.envs[0].id())
            .field("num_envs", &self.envs.len())
            .finish()
    }
}

impl VecEnv {
    /// Instance `i` draws from `Rng::new(seed).child("env", i)`.
    pub fn new(env_id: &str, num_envs: usize, seed: u64) -> Result<Self> {
        if num_envs == 0 {
            return Err(Error::InvalidArgument("num_envs must be >= 1".into()));
        }
        let root = Rng::new(seed);
        let mut envs = Vec::with_capacity(num_envs);
        let mut rngs = Vec::with_capacity(num_envs);
        let mut obs = Vec::with_capacity(num_envs);
        for i in 0..num_envs {
            let mut env = make_env(env_id)?;
            let mut rng = root.child(tags::ENV, i as u64);
            obs.push(env.reset(&mut rng));
            envs.push(env);
            rngs.push(rng);
        }
        Ok(Self {
            envs,
            rngs,
            obs,
            episode_returns: vec![0.0; num_envs],
            episode_lengths: vec![0; num_envs],
        })
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn observation_dim(&self) -> usize {
        self.envs[0].observation_dim()
    }

    pub fn action_space(&self) -> ActionSpace {
        self.envs[0].action_space()
    }

    /// Current observation of every slot.
    pub fn observations(&self) -> &[Vec<f64>] {
        &self.obs
    }

    /// Legal-action masks of the current states (masked spaces only).
    pub fn action_masks(&self) -> Option<Vec<Vec<bool>>> {
        self.envs.iter().map(|e| e.action_mask()).collect()
    }

    /// Steps of the episode currently in flight, per slot.
    pub fn live_episode_lengths(&self) -> &[u64] {
        &self.episode_lengths
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<VecStep> {
        let n = self.envs.len();
        if actions.len() != n {
            return Err(Error::shape("VecEnv::step actions", n, actions.len()));
        }
        let mut out = VecStep {
            obs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            terminated: Vec::with_capacity(n),
            truncated: Vec::with_capacity(n),
            infos: Vec::with_capacity(n),
            final_obs: Vec::with_capacity(n),
        };
        for i in 0..n {
            let EnvStep {
                obs,
                reward,
                terminated,
                truncated,
                ..
            } = self.envs[i].step(&actions[i])?;
            self.episode_returns[i] += reward;
            self.episode_lengths[i] += 1;
            if terminated || truncated {
                out.infos.push(Some(EpisodeInfo {
                    episodic_return: self.episode_returns[i],
                    episodic_length: self.episode_lengths[i],
                }));
                self.episode_returns[i] = 0.0;
                self.episode_lengths[i] = 0;
                out.final_obs.push(Some(obs));
                self.obs[i] = self.envs[i].reset(&mut self.rngs[i]);
            } else {
                out.infos.push(None);
                out.final_obs.push(None);
                self.obs[i] = obs;
            }
            out.obs.push(self.obs[i].clone());
            out.rewards.push(reward);
            out.terminated.push(terminated);
            out.truncated.push(truncated);
        }
        Ok(out)
    }
}
