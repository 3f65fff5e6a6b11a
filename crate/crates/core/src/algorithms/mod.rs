//! One training file per algorithm, plus the math they share.
//!
//! Each of `ppo`, `ppo_continuous`, `ppo_masked`, `dqn`, `c51`, `ddpg`,
//! `td3` and `sac` holds its own `Config` and a `train` function owning the
//! whole loop. Scaffolding is duplicated between them on purpose so that any
//! one file can be read top to bottom without chasing abstractions.

pub mod c51;
pub mod ddpg;
pub mod dqn;
pub mod losses;
pub mod ppo;
pub mod ppo_continuous;
pub mod ppo_masked;
pub mod sac;
pub mod td3;

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::{describe, ActionSpace, EpisodeInfo};
use crate::nn::{Matrix, Scalar};
use crate::tracking::{self, keys, RunHandle, RunManifest, SweepMembership};
use crate::{Error, Result};

/// Registered algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoId {
    Ppo,
    PpoContinuous,
    PpoMasked,
    Dqn,
    C51,
    Ddpg,
    Td3,
    Sac,
}

impl AlgoId {
    pub const ALL: [AlgoId; 8] = [
        AlgoId::Ppo,
        AlgoId::PpoContinuous,
        AlgoId::PpoMasked,
        AlgoId::Dqn,
        AlgoId::C51,
        AlgoId::Ddpg,
        AlgoId::Td3,
        AlgoId::Sac,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgoId::Ppo => "ppo",
            AlgoId::PpoContinuous => "ppo_continuous",
            AlgoId::PpoMasked => "ppo_masked",
            AlgoId::Dqn => "dqn",
            AlgoId::C51 => "c51",
            AlgoId::Ddpg => "ddpg",
            AlgoId::Td3 => "td3",
            AlgoId::Sac => "sac",
        }
    }

    /// Environment used when none is given.
    pub fn default_env(self) -> &'static str {
        use crate::envs::{CARTPOLE_V1, MASKEDGRID_V0, PENDULUM_V1};
        match self {
            AlgoId::Ppo | AlgoId::Dqn | AlgoId::C51 => CARTPOLE_V1,
            AlgoId::PpoMasked => MASKEDGRID_V0,
            AlgoId::PpoContinuous | AlgoId::Ddpg | AlgoId::Td3 | AlgoId::Sac => PENDULUM_V1,
        }
    }

    /// Training budget used when none is given.
    pub fn default_timesteps(self) -> u64 {
        match self {
            AlgoId::Ppo | AlgoId::Dqn | AlgoId::C51 => 250_000,
            AlgoId::PpoMasked => 100_000,
            AlgoId::PpoContinuous => 300_000,
            AlgoId::Ddpg | AlgoId::Td3 | AlgoId::Sac => 60_000,
        }
    }

    /// Source of the algorithm's training file; hashed into the manifest.
    pub fn source(self) -> &'static str {
        match self {
            AlgoId::Ppo => include_str!("ppo.rs"),
            AlgoId::PpoContinuous => include_str!("ppo_continuous.rs"),
            AlgoId::PpoMasked => include_str!("ppo_masked.rs"),
            AlgoId::Dqn => include_str!("dqn.rs"),
            AlgoId::C51 => include_str!("c51.rs"),
            AlgoId::Ddpg => include_str!("ddpg.rs"),
            AlgoId::Td3 => include_str!("td3.rs"),
            AlgoId::Sac => include_str!("sac.rs"),
        }
    }

    /// Whether the algorithm can act in `space`.
    pub fn supports(self, space: &ActionSpace) -> bool {
        match self {
            AlgoId::Ppo | AlgoId::Dqn | AlgoId::C51 => matches!(space, ActionSpace::Discrete(_)),
            AlgoId::PpoMasked => matches!(space, ActionSpace::DiscreteMasked(_)),
            AlgoId::PpoContinuous | AlgoId::Ddpg | AlgoId::Td3 | AlgoId::Sac => {
                matches!(space, ActionSpace::Continuous { .. })
            }
        }
    }
}

impl fmt::Display for AlgoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgoId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgoId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::UnknownAlgo(s.to_string()))
    }
}

/// Errors unless `algo` can act in the action space of `env_id`.
pub fn check_env(algo: AlgoId, env_id: &str) -> Result<ActionSpace> {
    let (_, space) = describe(env_id)?;
    if !algo.supports(&space) {
        return Err(Error::IncompatibleEnv {
            algo: algo.to_string(),
            env: env_id.to_string(),
            reason: format!("action space {space:?} is not supported"),
        });
    }
    Ok(space)
}

/// Hyperparameters of any registered algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo_id", rename_all = "snake_case")]
pub enum AlgoConfig {
    Ppo(ppo::Config),
    PpoContinuous(ppo_continuous::Config),
    PpoMasked(ppo_masked::Config),
    Dqn(dqn::Config),
    C51(c51::Config),
    Ddpg(ddpg::Config),
    Td3(td3::Config),
    Sac(sac::Config),
}

macro_rules! each_config {
    ($self:expr, $c:ident => $body:expr) => {
        match $self {
            AlgoConfig::Ppo($c) => $body,
            AlgoConfig::PpoContinuous($c) => $body,
            AlgoConfig::PpoMasked($c) => $body,
            AlgoConfig::Dqn($c) => $body,
            AlgoConfig::C51($c) => $body,
            AlgoConfig::Ddpg($c) => $body,
            AlgoConfig::Td3($c) => $body,
            AlgoConfig::Sac($c) => $body,
        }
    };
}

impl AlgoConfig {
    /// Defaults for `algo` on `env_id`.
    pub fn new(algo: AlgoId, env_id: &str, seed: u64, total_timesteps: u64) -> Self {
        match algo {
            AlgoId::Ppo => AlgoConfig::Ppo(ppo::Config::new(env_id, seed, total_timesteps)),
            AlgoId::PpoContinuous => {
                AlgoConfig::PpoContinuous(ppo_continuous::Config::new(env_id, seed, total_timesteps))
            }
            AlgoId::PpoMasked => AlgoConfig::PpoMasked(ppo_masked::Config::new(env_id, seed, total_timesteps)),
            AlgoId::Dqn => AlgoConfig::Dqn(dqn::Config::new(env_id, seed, total_timesteps)),
            AlgoId::C51 => AlgoConfig::C51(c51::Config::new(env_id, seed, total_timesteps)),
            AlgoId::Ddpg => AlgoConfig::Ddpg(ddpg::Config::new(env_id, seed, total_timesteps)),
            AlgoId::Td3 => AlgoConfig::Td3(td3::Config::new(env_id, seed, total_timesteps)),
            AlgoId::Sac => AlgoConfig::Sac(sac::Config::new(env_id, seed, total_timesteps)),
        }
    }

    pub fn algo_id(&self) -> AlgoId {
        match self {
            AlgoConfig::Ppo(_) => AlgoId::Ppo,
            AlgoConfig::PpoContinuous(_) => AlgoId::PpoContinuous,
            AlgoConfig::PpoMasked(_) => AlgoId::PpoMasked,
            AlgoConfig::Dqn(_) => AlgoId::Dqn,
            AlgoConfig::C51(_) => AlgoId::C51,
            AlgoConfig::Ddpg(_) => AlgoId::Ddpg,
            AlgoConfig::Td3(_) => AlgoId::Td3,
            AlgoConfig::Sac(_) => AlgoId::Sac,
        }
    }

    pub fn env_id(&self) -> &str {
        each_config!(self, c => &c.env_id)
    }

    pub fn seed(&self) -> u64 {
        each_config!(self, c => c.seed)
    }

    pub fn total_timesteps(&self) -> u64 {
        each_config!(self, c => c.total_timesteps)
    }

    /// Bounds checks plus action-space compatibility.
    pub fn validate(&self) -> Result<()> {
        each_config!(self, c => c.validate())?;
        check_env(self.algo_id(), self.env_id()).map(|_| ())
    }

    /// The algorithm's own config as JSON, as written to the manifest.
    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(each_config!(self, c => serde_json::to_value(c))?)
    }

    /// Names of all settable fields.
    pub fn keys(&self) -> Vec<String> {
        match self.to_json() {
            Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// Applies a `key=value` override. `raw` is read as JSON when it parses,
    /// otherwise as a bare string. The result is re-checked against the
    /// schema and the bounds.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut value = self.to_json()?;
        let map = value
            .as_object_mut()
            .ok_or_else(|| Error::Config("config is not an object".into()))?;
        if !map.contains_key(key) {
            return Err(Error::Config(format!(
                "unknown key `{key}` for {}; valid keys: {}",
                self.algo_id(),
                self.keys().join(", ")
            )));
        }
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        map.insert(key.to_string(), parsed);
        let bad = |e: serde_json::Error| Error::Config(format!("invalid value `{raw}` for `{key}`: {e}"));
        let updated = match self {
            AlgoConfig::Ppo(_) => AlgoConfig::Ppo(serde_json::from_value(value).map_err(bad)?),
            AlgoConfig::PpoContinuous(_) => AlgoConfig::PpoContinuous(serde_json::from_value(value).map_err(bad)?),
            AlgoConfig::PpoMasked(_) => AlgoConfig::PpoMasked(serde_json::from_value(value).map_err(bad)?),
            AlgoConfig::Dqn(_) => AlgoConfig::Dqn(serde_json::from_value(value).map_err(bad)?),
            AlgoConfig::C51(_) => AlgoConfig::C51(serde_json::from_value(value).map_err(bad)?),
            AlgoConfig::Ddpg(_) => AlgoConfig::Ddpg(serde_json::from_value(value).map_err(bad)?),
            AlgoConfig::Td3(_) => AlgoConfig::Td3(serde_json::from_value(value).map_err(bad)?),
            AlgoConfig::Sac(_) => AlgoConfig::Sac(serde_json::from_value(value).map_err(bad)?),
        };
        each_config!(&updated, c => c.validate())?;
        *self = updated;
        Ok(())
    }

    /// Runs the algorithm's training loop against an open run.
    pub fn train(&self, run: &mut RunHandle) -> Result<FinalReport> {
        each_config!(self, c => c.train(run))
    }
}

/// Where and how a run is recorded.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub runs_dir: PathBuf,
    pub exp_name: String,
    pub invocation: String,
    pub sweep: Option<SweepMembership>,
}

/// Validates, opens a run directory, trains and seals the run.
///
/// Validation errors surface before anything touches the filesystem. A
/// training error marks the run as failed before being returned.
pub fn run_experiment(config: &AlgoConfig, options: &RunOptions) -> Result<FinalReport> {
    config.validate()?;
    let algo = config.algo_id();
    let manifest = RunManifest {
        run_id: tracking::new_run_id(),
        exp_name: options.exp_name.clone(),
        algo_id: algo.to_string(),
        env_id: config.env_id().to_string(),
        seed: config.seed(),
        config: config.to_json()?,
        invocation: options.invocation.clone(),
        start_time: chrono::Utc::now().to_rfc3339(),
        code_version: tracking::code_version(algo.source()),
        sweep: options.sweep.clone(),
    };
    let mut run = tracking::open_run(&options.runs_dir, manifest)?;
    match config.train(&mut run) {
        Ok(report) => {
            run.close()?;
            Ok(report)
        }
        Err(e) => {
            if let Err(fail_err) = run.fail(&e.to_string()) {
                log::error!("could not record failure: {fail_err}");
            }
            Err(e)
        }
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub run_dir: PathBuf,
    pub global_step: u64,
    pub episodes: u64,
    /// Returns of the last (up to) 100 finished episodes, oldest first.
    pub recent_returns: Vec<f64>,
}

impl FinalReport {
    /// Mean return over the last `n` finished episodes.
    pub fn mean_return(&self, n: usize) -> Option<f64> {
        let k = n.min(self.recent_returns.len());
        if k == 0 {
            return None;
        }
        let tail = &self.recent_returns[self.recent_returns.len() - k..];
        Some(tail.iter().sum::<f64>() / k as f64)
    }
}

/// Number of episodes kept for the final report.
pub const RETURN_WINDOW: usize = 100;

/// Logs finished episodes and keeps a window of recent returns.
#[derive(Debug, Default)]
pub(crate) struct EpisodeLog {
    count: u64,
    recent: VecDeque<f64>,
}

impl EpisodeLog {
    pub(crate) fn record(&mut self, run: &mut RunHandle, step: u64, info: &EpisodeInfo) -> Result<()> {
        run.log_metric(step, keys::EPISODIC_RETURN, info.episodic_return)?;
        run.log_metric(step, keys::EPISODIC_LENGTH, info.episodic_length as f64)?;
        self.count += 1;
        if self.recent.len() == RETURN_WINDOW {
            self.recent.pop_front();
        }
        self.recent.push_back(info.episodic_return);
        Ok(())
    }

    pub(crate) fn report(&self, run_dir: &Path, global_step: u64) -> FinalReport {
        FinalReport {
            run_dir: run_dir.to_path_buf(),
            global_step,
            episodes: self.count,
            recent_returns: self.recent.iter().copied().collect(),
        }
    }
}

/// Stacks `f64` rows into a matrix of `T`.
pub(crate) fn rows_to_matrix<T: Scalar, R: AsRef<[f64]>>(rows: &[R]) -> Matrix<T> {
    let cols = rows.first().map_or(0, |r| r.as_ref().len());
    let data = rows.iter().flat_map(|r| r.as_ref().iter().map(|&v| T::of(v))).collect();
    Matrix::from_vec(rows.len(), cols, data).expect("rows of equal length")
}

/// Row `i` of `m` widened to `f64`.
pub(crate) fn row_f64<T: Scalar>(m: &Matrix<T>, i: usize) -> Vec<f64> {
    m.row(i).iter().map(|v| v.as_f64()).collect()
}

/// Errors with the field name and bound when `value` is outside `[lo, hi]`.
pub(crate) fn check_range(name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_nan() || value < lo || value > hi {
        return Err(Error::Config(format!("{name} must lie in [{lo}, {hi}], got {value}")));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_nan() || value <= 0.0 || value.is_infinite() {
        return Err(Error::Config(format!(
            "{name} must be a positive finite number, got {value}"
        )));
    }
    Ok(())
}

pub(crate) fn check_nonzero(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(Error::Config(format!("{name} must be at least 1")));
    }
    Ok(())
}

pub(crate) fn check_hidden(sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Config(format!(
            "hidden_sizes must be a non-empty list of positive widths, got {sizes:?}"
        )));
    }
    Ok(())
}

/// Continuous action bounds for `env_id` as `(dim, low, high)`.
pub(crate) fn continuous_bounds(algo: AlgoId, env_id: &str) -> Result<(usize, f64, f64)> {
    match check_env(algo, env_id)? {
        ActionSpace::Continuous { dim, low, high } => Ok((dim, low, high)),
        _ => unreachable!("checked by check_env"),
    }
}
