use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use monorl_core::algorithms::{run_experiment, AlgoConfig, AlgoId, FinalReport, RunOptions};
use monorl_core::envs::{CARTPOLE_V1, MASKEDGRID_V0, PENDULUM_V1};
use monorl_core::nn::{Activation, Mlp};
use monorl_core::rng::tags;
use monorl_core::tracking::{keys, load_checkpoint, parse_run, parse_trajectories, METRICS_FILE};
use monorl_core::{Error, Rng};

fn options(dir: &Path) -> RunOptions {
    RunOptions {
        runs_dir: dir.to_path_buf(),
        exp_name: "t".into(),
        invocation: "test".into(),
        sweep: None,
    }
}

/// A configuration small enough to finish in a second or two, with updates
/// happening well inside the run.
fn quick(algo: AlgoId, seed: u64) -> AlgoConfig {
    let (env, total, overrides): (&str, u64, &[(&str, &str)]) = match algo {
        AlgoId::Ppo => (CARTPOLE_V1, 1024, &[("num_steps", "64")]),
        AlgoId::PpoMasked => (MASKEDGRID_V0, 1024, &[("num_steps", "64")]),
        AlgoId::PpoContinuous => (PENDULUM_V1, 1024, &[("num_steps", "256"), ("num_minibatches", "4")]),
        AlgoId::Dqn | AlgoId::C51 => (
            CARTPOLE_V1,
            1500,
            &[
                ("learning_starts", "500"),
                ("target_network_frequency", "100"),
                ("batch_size", "32"),
            ],
        ),
        AlgoId::Ddpg | AlgoId::Td3 | AlgoId::Sac => (
            PENDULUM_V1,
            500,
            &[
                ("learning_starts", "300"),
                ("batch_size", "16"),
                ("hidden_sizes", "[16, 16]"),
            ],
        ),
    };
    let mut config = AlgoConfig::new(algo, env, seed, total);
    for (k, v) in overrides {
        config.set(k, v).unwrap_or_else(|e| panic!("{algo}: {e}"));
    }
    config
}

fn metrics_without_wall_time(run_dir: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(run_dir.join(METRICS_FILE))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_time_s");
            v
        })
        .collect()
}

fn run(config: &AlgoConfig, dir: &Path) -> FinalReport {
    run_experiment(config, &options(dir)).unwrap_or_else(|e| panic!("{}: {e}", config.algo_id()))
}

#[test]
fn every_algorithm_is_deterministic_given_its_seed() {
    for algo in AlgoId::ALL {
        let dir = tempfile::tempdir().unwrap();
        let config = quick(algo, 3);
        let a = run(&config, dir.path());
        let b = run(&config, dir.path());
        assert_ne!(a.run_dir, b.run_dir);
        let (ma, mb) = (
            metrics_without_wall_time(&a.run_dir),
            metrics_without_wall_time(&b.run_dir),
        );
        assert!(!ma.is_empty(), "{algo}: no metrics");
        assert_eq!(ma, mb, "{algo}: metrics differ between identical runs");
        let (ca, cb) = (
            load_checkpoint(&a.run_dir).unwrap(),
            load_checkpoint(&b.run_dir).unwrap(),
        );
        assert_eq!(ca.networks, cb.networks, "{algo}: checkpoints differ");

        let c = run(&quick(algo, 4), dir.path());
        assert_ne!(metrics_without_wall_time(&c.run_dir), ma, "{algo}: seed had no effect");
    }
}

#[test]
fn zero_timesteps_gives_a_complete_empty_run() {
    for algo in AlgoId::ALL {
        let dir = tempfile::tempdir().unwrap();
        let config = AlgoConfig::new(algo, algo.default_env(), 1, 0);
        let report = run(&config, dir.path());
        assert_eq!(report.global_step, 0);
        assert_eq!(report.episodes, 0);
        let parsed = parse_run(&report.run_dir).unwrap();
        assert!(parsed.metrics.is_empty() && parsed.timing.is_empty(), "{algo}");
        assert!(parsed.status.unwrap().completed);
        assert_eq!(parsed.manifest.algo_id, algo.as_str());
        assert!(!load_checkpoint(&report.run_dir).unwrap().networks.is_empty());
    }
}

#[test]
fn zero_timestep_ppo_checkpoint_holds_the_initial_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&AlgoConfig::new(AlgoId::Ppo, CARTPOLE_V1, 9, 0), dir.path());
    let ckpt = load_checkpoint(&report.run_dir).unwrap();
    let mut init = Rng::new(9).child(tags::INIT, 0);
    let s2 = std::f64::consts::SQRT_2;
    let actor = Mlp::<f32>::orthogonal(
        &[4, 64, 64, 2],
        Activation::Tanh,
        Activation::Identity,
        s2,
        0.01,
        &mut init,
    )
    .unwrap();
    let critic = Mlp::<f32>::orthogonal(
        &[4, 64, 64, 1],
        Activation::Tanh,
        Activation::Identity,
        s2,
        1.0,
        &mut init,
    )
    .unwrap();
    let find = |name: &str| ckpt.networks.iter().find(|(n, _)| n == name).unwrap().1.flat_params();
    assert_eq!(find("actor"), actor.flat_params());
    assert_eq!(find("critic"), critic.flat_params());
}

#[test]
fn incompatible_env_fails_before_anything_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (AlgoId::Dqn, PENDULUM_V1),
        (AlgoId::C51, PENDULUM_V1),
        (AlgoId::Ppo, PENDULUM_V1),
        (AlgoId::Sac, CARTPOLE_V1),
        (AlgoId::Td3, MASKEDGRID_V0),
        (AlgoId::PpoMasked, CARTPOLE_V1),
        (AlgoId::PpoContinuous, CARTPOLE_V1),
    ];
    for (algo, env) in cases {
        let err = run_experiment(&AlgoConfig::new(algo, env, 1, 1000), &options(dir.path())).unwrap_err();
        assert!(matches!(err, Error::IncompatibleEnv { .. }), "{algo} on {env}: {err}");
    }
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn out_of_range_overrides_are_rejected_with_the_field_name() {
    let mut config = AlgoConfig::new(AlgoId::Ppo, CARTPOLE_V1, 1, 1000);
    let err = config.set("gamma", "1.5").unwrap_err().to_string();
    assert!(err.contains("gamma"), "{err}");
    let err = config.set("not_a_key", "1").unwrap_err().to_string();
    assert!(err.contains("not_a_key") && err.contains("clip_coef"), "{err}");
    assert!(config.set("num_envs", "\"four\"").is_err());
    config.set("gamma", "0.5").unwrap();
    assert_eq!(config.to_json().unwrap()["gamma"], 0.5);
}

#[test]
fn off_policy_updates_wait_for_learning_starts() {
    let loss_keys: BTreeSet<&str> = [
        keys::QF_LOSS,
        keys::QF1_LOSS,
        keys::QF2_LOSS,
        keys::ACTOR_LOSS,
        keys::ALPHA_LOSS,
    ]
    .into_iter()
    .collect();
    for algo in [AlgoId::Dqn, AlgoId::C51, AlgoId::Ddpg, AlgoId::Td3, AlgoId::Sac] {
        let dir = tempfile::tempdir().unwrap();
        let config = quick(algo, 1);
        let starts = config.to_json().unwrap()["learning_starts"].as_u64().unwrap();
        let report = run(&config, dir.path());
        let parsed = parse_run(&report.run_dir).unwrap();
        let first = parsed
            .metrics
            .iter()
            .filter(|e| loss_keys.contains(e.key.as_str()))
            .map(|e| e.step)
            .min()
            .unwrap_or_else(|| panic!("{algo}: no loss events"));
        assert!(first >= starts, "{algo}: first loss at step {first} < {starts}");
    }
}

#[test]
fn env_steps_match_total_timesteps_within_one_batch() {
    for algo in AlgoId::ALL {
        let dir = tempfile::tempdir().unwrap();
        let config = quick(algo, 2);
        let json = config.to_json().unwrap();
        let granule = json
            .get("num_steps")
            .map(|s| s.as_u64().unwrap() * json["num_envs"].as_u64().unwrap())
            .unwrap_or(1);
        let report = run(&config, dir.path());
        let total = config.total_timesteps();
        assert!(
            report.global_step <= total && total - report.global_step < granule,
            "{algo}: {}",
            report.global_step
        );
    }
}

#[test]
fn masked_policy_never_logs_an_illegal_action() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick(AlgoId::PpoMasked, 5);
    config.set("total_timesteps", "4096").unwrap();
    let report = run(&config, dir.path());
    let records = parse_trajectories(&report.run_dir).unwrap();
    assert_eq!(records.len() as u64, report.global_step);
    for r in &records {
        let mask = r.mask.as_ref().expect("masked runs log their masks");
        let a = r.action[0] as usize;
        assert!(mask[a], "step {} env {}: action {a} is masked out", r.step, r.env);
        assert!(mask.iter().any(|&m| m));
    }
}

#[test]
fn manifest_records_the_config_and_source_hash() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick(AlgoId::Td3, 8);
    let report = run(&config, dir.path());
    let parsed = parse_run(&report.run_dir).unwrap();
    assert_eq!(parsed.manifest.config, config.to_json().unwrap());
    assert_eq!(
        parsed.manifest.code_version,
        monorl_core::tracking::code_version(AlgoId::Td3.source())
    );
    let dir_of: PathBuf = dir.path().join("t").join(&parsed.manifest.run_id);
    assert_eq!(dir_of, report.run_dir);
}
