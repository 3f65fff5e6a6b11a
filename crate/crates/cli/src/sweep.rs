//! Benchmark sweep specification.
//!
//! ```json
//! {
//!   "exp_name": "cartpole-bench",
//!   "experiments": [
//!     {"algo": "ppo", "env": "cartpole-v1", "total_timesteps": 250000},
//!     {"algo": "dqn", "env": "cartpole-v1", "overrides": {"learning_starts": 5000}}
//!   ],
//!   "seeds": [1, 2, 3],
//!   "max_parallel": 3
//! }
//! ```
//!
//! Jobs are the cross product of experiments and seeds, experiments outer.

use std::collections::BTreeMap;
use std::path::Path;

use monorl_core::algorithms::AlgoId;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub exp_name: String,
    pub experiments: Vec<Experiment>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
}

fn default_parallel() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub algo: String,
    pub env: String,
    /// Defaults to the algorithm's standard budget.
    #[serde(default)]
    pub total_timesteps: Option<u64>,
    /// Config overrides, applied like `--set key=value`.
    #[serde(default)]
    pub overrides: BTreeMap<String, serde_json::Value>,
}

/// One (experiment, seed) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub index: usize,
    pub algo: AlgoId,
    pub env: String,
    pub seed: u64,
    pub total_timesteps: Option<u64>,
    pub overrides: BTreeMap<String, serde_json::Value>,
}

impl SweepSpec {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read sweep spec {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let spec: SweepSpec =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("malformed sweep spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Structural checks. Environment and override problems are left to the
    /// individual jobs so that one bad experiment does not sink the sweep.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(format!("malformed sweep spec: {m}")));
        if self.exp_name.is_empty() || self.exp_name.contains(['/', '\\']) || self.exp_name.starts_with('.') {
            return bad(format!("invalid exp_name `{}`", self.exp_name));
        }
        if self.experiments.is_empty() {
            return bad("no experiments".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("duplicate seeds".into());
        }
        if self.max_parallel == 0 {
            return bad("max_parallel must be at least 1".into());
        }
        for e in &self.experiments {
            if e.algo.parse::<AlgoId>().is_err() {
                return bad(format!("unknown algorithm `{}`", e.algo));
            }
        }
        Ok(())
    }

    pub fn total_jobs(&self) -> usize {
        self.experiments.len() * self.seeds.len()
    }

    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::with_capacity(self.total_jobs());
        for e in &self.experiments {
            for &seed in &self.seeds {
                jobs.push(Job {
                    index: jobs.len(),
                    algo: e.algo.parse().expect("validated"),
                    env: e.env.clone(),
                    seed,
                    total_timesteps: e.total_timesteps,
                    overrides: e.overrides.clone(),
                });
            }
        }
        jobs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"{"exp_name": "s", "experiments": [
        {"algo": "ppo", "env": "cartpole-v1"},
        {"algo": "dqn", "env": "cartpole-v1", "overrides": {"gamma": 0.9}}],
        "seeds": [1, 2, 3], "max_parallel": 3}"#;

    #[test]
    fn cross_product() {
        let spec = SweepSpec::from_json(SPEC).unwrap();
        let jobs = spec.jobs();
        assert_eq!(jobs.len(), 6);
        assert_eq!(jobs[4].algo, AlgoId::Dqn);
        assert_eq!(jobs[4].seed, 2);
        assert_eq!(jobs[4].index, 4);
    }

    #[test]
    fn malformed_specs() {
        for text in [
            "{",
            r#"{"exp_name": "s", "experiments": [], "seeds": [1]}"#,
            r#"{"exp_name": "s", "experiments": [{"algo": "ppo", "env": "x"}], "seeds": []}"#,
            r#"{"exp_name": "s", "experiments": [{"algo": "nope", "env": "x"}], "seeds": [1]}"#,
            r#"{"exp_name": "a/b", "experiments": [{"algo": "ppo", "env": "x"}], "seeds": [1]}"#,
            r#"{"exp_name": "s", "experiments": [{"algo": "ppo", "env": "x"}], "seeds": [1, 1]}"#,
            r#"{"exp_name": "s", "experiments": [{"algo": "ppo", "env": "x"}], "seeds": [1], "max_parallel": 0}"#,
            r#"{"exp_name": "s", "experiments": [{"algo": "ppo", "env": "x", "extra": 1}], "seeds": [1]}"#,
        ] {
            assert!(SweepSpec::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn unknown_env_is_a_job_problem() {
        let text = r#"{"exp_name": "s", "experiments": [{"algo": "ppo", "env": "nope"}], "seeds": [1]}"#;
        assert!(SweepSpec::from_json(text).is_ok());
    }
}
