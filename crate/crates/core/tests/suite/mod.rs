//! Numeric property checks shared by the core integration tests and the
//! acceptance run. Each check returns `Err` with a description on failure.

#![allow(dead_code, clippy::needless_range_loop)]

use monorl_core::algorithms::losses::{c51_project, C51Support};
use monorl_core::envs::{describe, ActionSpace, MASKEDGRID_V0, PENDULUM_V1};
use monorl_core::memory::{compute_gae, ReplayBuffer, Transition};
use monorl_core::nn::{orthogonal_init, Activation, AdamConfig, AdamState, Matrix, Mlp};
use monorl_core::tracking::{ema_smooth, open_run, parse_run, MetricEvent, RunManifest};
use monorl_core::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub type Check = fn() -> Result<(), String>;

pub const ALL: &[(&str, Check)] = &[
    ("gradient checks", gradient_checks),
    ("gae direct-sum oracle", gae_oracle),
    ("c51 scatter oracle", c51_scatter_oracle),
    ("adam scalar oracle", adam_scalar_oracle),
    ("orthogonal init products", orthogonal_products),
    ("replay fifo and uniformity", replay_fifo_and_uniformity),
    ("ema convexity", ema_convexity),
    ("tracker round trip", tracker_round_trip),
];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Every MLP shape the algorithms build with their default settings.
pub fn network_shapes() -> Vec<(&'static str, Vec<usize>, Activation, Activation)> {
    use Activation::{Identity, Relu, Tanh};
    let grid = describe(MASKEDGRID_V0).unwrap();
    let grid_actions = grid.1.num_discrete().unwrap();
    let pendulum_obs = describe(PENDULUM_V1).unwrap().0;
    let act = match describe(PENDULUM_V1).unwrap().1 {
        ActionSpace::Continuous { dim, .. } => dim,
        _ => unreachable!(),
    };
    vec![
        ("ppo actor", vec![4, 64, 64, 2], Tanh, Identity),
        ("ppo critic", vec![4, 64, 64, 1], Tanh, Identity),
        ("ppo_masked actor", vec![grid.0, 64, 64, grid_actions], Tanh, Identity),
        ("ppo_masked critic", vec![grid.0, 64, 64, 1], Tanh, Identity),
        ("ppo_continuous actor", vec![pendulum_obs, 64, 64, act], Tanh, Identity),
        ("ppo_continuous critic", vec![pendulum_obs, 64, 64, 1], Tanh, Identity),
        ("dqn q", vec![4, 120, 84, 2], Relu, Identity),
        ("c51 q", vec![4, 120, 84, 2 * 101], Relu, Identity),
        ("ddpg/td3 actor", vec![pendulum_obs, 256, 256, act], Relu, Tanh),
        (
            "ddpg/td3/sac critic",
            vec![pendulum_obs + act, 256, 256, 1],
            Relu,
            Identity,
        ),
        ("sac actor", vec![pendulum_obs, 256, 256, 2 * act], Relu, Identity),
    ]
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

/// Backward against central differences (h = 1e-5) of `Σ w ⊙ f(x)` for
/// every shape; large networks are checked on a random parameter subset.
pub fn gradient_checks() -> Result<(), String> {
    const H: f64 = 1e-5;
    const MAX_PARAMS: usize = 160;
    let mut rng = Rng::new(2024);
    for (name, sizes, hidden, out) in network_shapes() {
        let net = Mlp::<f64>::fan_in_uniform(&sizes, hidden, out, &mut rng).unwrap();
        let x = random_matrix(3, sizes[0], &mut rng);
        let w = random_matrix(3, *sizes.last().unwrap(), &mut rng);
        let objective = |n: &Mlp<f64>| -> f64 {
            let y = n.predict(&x).unwrap();
            y.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, grad_in) = net.backward(&cache, &w).unwrap();
        let analytic: Vec<f64> = grads.slices().concat();
        let base = net.flat_params();
        let specs = net.specs();
        let picks: Vec<usize> = if base.len() <= MAX_PARAMS {
            (0..base.len()).collect()
        } else {
            (0..MAX_PARAMS).map(|_| rng.below(base.len())).collect()
        };
        let mut worst = 0.0f64;
        for k in picks {
            let at = |delta: f64| {
                let mut p = base.clone();
                p[k] += delta;
                objective(&Mlp::from_specs(&specs, &p).unwrap())
            };
            let fd = (at(H) - at(-H)) / (2.0 * H);
            worst = worst.max(rel_err(analytic[k], fd));
        }
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let at = |delta: f64| {
                    let mut xs = x.clone();
                    xs[(i, j)] += delta;
                    let y = net.predict(&xs).unwrap();
                    y.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum::<f64>()
                };
                let fd = (at(H) - at(-H)) / (2.0 * H);
                worst = worst.max(rel_err(grad_in[(i, j)], fd));
            }
        }
        ensure(worst < 1e-4, || format!("{name}: max relative error {worst:e}"))?;
    }
    Ok(())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Advantages as explicit finite sums `Σ_l (γλ)^l δ_{t+l}` truncated at the
/// first episode end, compared with the recursive implementation.
pub fn gae_oracle() -> Result<(), String> {
    let mut rng = Rng::new(7);
    for case in 0..500 {
        let steps = 1 + rng.below(8);
        let n = 1 + rng.below(3);
        let len = steps * n;
        let gamma = if case % 10 == 0 { 1.0 } else { rng.uniform() };
        let lam = if case % 7 == 0 { 0.0 } else { rng.uniform() };
        let rewards: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        let values: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        let boots: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        let terminated: Vec<bool> = (0..len).map(|_| rng.uniform() < 0.25).collect();
        let truncated: Vec<bool> = (0..len).map(|i| !terminated[i] && rng.uniform() < 0.2).collect();
        let last: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let (adv, ret) = compute_gae(&rewards, &values, &terminated, &truncated, &boots, &last, n, gamma, lam)
            .map_err(|e| e.to_string())?;

        for env in 0..n {
            let idx = |t: usize| t * n + env;
            let delta = |t: usize| {
                let i = idx(t);
                let next = if terminated[i] {
                    0.0
                } else if truncated[i] {
                    boots[i]
                } else if t + 1 == steps {
                    last[env]
                } else {
                    values[idx(t + 1)]
                };
                rewards[i] + gamma * next - values[i]
            };
            for t in 0..steps {
                let mut expected = 0.0;
                for l in 0..steps - t {
                    expected += (gamma * lam).powi(l as i32) * delta(t + l);
                    let i = idx(t + l);
                    if terminated[i] || truncated[i] {
                        break;
                    }
                }
                let i = idx(t);
                ensure((adv[i] - expected).abs() < 1e-10, || {
                    format!("case {case} env {env} t {t}: {} vs {expected}", adv[i])
                })?;
                ensure((ret[i] - (expected + values[i])).abs() < 1e-10, || {
                    format!("case {case}: return mismatch")
                })?;
            }
        }
    }
    Ok(())
}

/// Projection against the triangular-kernel form
/// `m_i = Σ_j p_j · max(0, 1 − |clip(Tz_j) − z_i| / Δz)`.
pub fn c51_scatter_oracle() -> Result<(), String> {
    let mut rng = Rng::new(51);
    for case in 0..2000 {
        let n_atoms = 2 + rng.below(6);
        let v_min = -rng.uniform_range(0.5, 20.0);
        let v_max = rng.uniform_range(0.5, 20.0);
        let support = C51Support::new(v_min, v_max, n_atoms).map_err(|e| e.to_string())?;
        let raw: Vec<f64> = (0..n_atoms).map(|_| rng.uniform() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let reward = if case % 5 == 0 {
            rng.normal() * 50.0
        } else {
            rng.normal() * 3.0
        };
        let terminated = rng.uniform() < 0.2;
        let gamma = if case % 9 == 0 { 1.0 } else { rng.uniform() };
        let got = c51_project(&support, &p, reward, terminated, gamma).map_err(|e| e.to_string())?;

        let dz = (v_max - v_min) / (n_atoms - 1) as f64;
        let z = |i: usize| v_min + i as f64 * dz;
        let mut expected = vec![0.0; n_atoms];
        for (j, &pj) in p.iter().enumerate() {
            let tz = (reward + if terminated { 0.0 } else { gamma * z(j) }).clamp(v_min, v_max);
            for (i, e) in expected.iter_mut().enumerate() {
                *e += pj * (1.0 - (tz - z(i)).abs() / dz).max(0.0);
            }
        }
        for i in 0..n_atoms {
            ensure((got[i] - expected[i]).abs() < 1e-6, || {
                format!("case {case} atom {i}: {} vs {}", got[i], expected[i])
            })?;
        }
        let mass: f64 = got.iter().sum();
        ensure((mass - 1.0).abs() < 1e-6, || format!("case {case}: mass {mass}"))?;
        let mean: f64 = got.iter().enumerate().map(|(i, q)| q * z(i)).sum();
        ensure(mean >= v_min - 1e-9 && mean <= v_max + 1e-9, || {
            format!("case {case}: mean {mean} outside support")
        })?;
    }
    Ok(())
}

/// Ten steps of Adam on `f(θ) = θ²` from θ = 1 against a scalar oracle.
pub fn adam_scalar_oracle() -> Result<(), String> {
    let config = AdamConfig::new(0.05);
    let mut theta = vec![1.0f64];
    let mut state = AdamState::<f64>::new(&[1], config);
    let (mut m, mut v, mut th) = (0.0f64, 0.0f64, 1.0f64);
    let mut prev = 1.0f64;
    for t in 1..=10 {
        let g = 2.0 * theta[0];
        state
            .step_slices(vec![&mut theta], &[&[g]])
            .map_err(|e| e.to_string())?;

        let g_oracle = 2.0 * th;
        m = 0.9 * m + 0.1 * g_oracle;
        v = 0.999 * v + 0.001 * g_oracle * g_oracle;
        let m_hat = m / (1.0 - 0.9f64.powi(t));
        let v_hat = v / (1.0 - 0.999f64.powi(t));
        th -= 0.05 * m_hat / (v_hat.sqrt() + 1e-8);

        ensure((theta[0] - th).abs() < 1e-12, || {
            format!("step {t}: {} vs oracle {th}", theta[0])
        })?;
        ensure(theta[0].abs() < prev, || format!("step {t}: |θ| did not decrease"))?;
        prev = theta[0].abs();
    }
    ensure(state.t == 10, || format!("t = {}", state.t))
}

/// `M·Mᵀ` (wide) or `Mᵀ·M` (tall) equals `gain²·I` for every layer shape in use.
pub fn orthogonal_products() -> Result<(), String> {
    let mut shapes: Vec<(usize, usize)> = vec![(1, 1), (4, 4)];
    for (_, sizes, _, _) in network_shapes() {
        for w in sizes.windows(2) {
            shapes.push((w[1], w[0]));
        }
    }
    shapes.sort();
    shapes.dedup();
    let mut rng = Rng::new(1);
    for (rows, cols) in shapes {
        for gain in [1.0, 2f64.sqrt(), 0.01] {
            let m = orthogonal_init::<f64>(rows, cols, gain, &mut rng);
            let prod = if rows <= cols {
                m.matmul(&m.transpose()).unwrap()
            } else {
                m.transpose().matmul(&m).unwrap()
            };
            let k = rows.min(cols);
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { gain * gain } else { 0.0 };
                    ensure((prod[(i, j)] - want).abs() < 1e-5, || {
                        format!("{rows}x{cols} gain {gain}: entry ({i},{j}) = {}", prod[(i, j)])
                    })?;
                }
            }
        }
    }
    Ok(())
}

fn push_tagged(buf: &mut ReplayBuffer, k: f32) -> Result<(), String> {
    buf.add(Transition {
        obs: &[k],
        action: &[k],
        reward: k,
        next_obs: &[k + 0.5],
        terminated: false,
    })
    .map_err(|e| e.to_string())
}

/// Overwrite order is FIFO, and 10⁵ draws from a 10-item buffer pass a χ²
/// uniformity test at p > 0.001.
pub fn replay_fifo_and_uniformity() -> Result<(), String> {
    let cap = 10;
    let mut buf = ReplayBuffer::new(cap, 1, 1).map_err(|e| e.to_string())?;
    for k in 0..(cap + 1) {
        push_tagged(&mut buf, k as f32)?;
        ensure(buf.len() == (k + 1).min(cap), || {
            format!("size {} after {} inserts", buf.len(), k + 1)
        })?;
    }
    let held: Vec<f32> = (0..cap).map(|i| buf.get(i).reward).collect();
    ensure(!held.contains(&0.0), || "oldest item survived an overwrite".into())?;
    ensure(held.contains(&(cap as f32)), || "newest item missing".into())?;
    for k in (cap + 1)..(3 * cap + 4) {
        push_tagged(&mut buf, k as f32)?;
        let mut held: Vec<f32> = (0..cap).map(|i| buf.get(i).reward).collect();
        held.sort_by(f32::total_cmp);
        let want: Vec<f32> = ((k + 1 - cap)..=k).map(|x| x as f32).collect();
        ensure(held == want, || {
            format!("after {} inserts buffer holds {held:?}", k + 1)
        })?;
    }

    let mut rng = Rng::new(99);
    let mut counts = vec![0u64; cap];
    let draws = 100_000;
    let mut remaining = draws;
    while remaining > 0 {
        let batch = buf.sample(remaining.min(1000), &mut rng).map_err(|e| e.to_string())?;
        for &i in &batch.indices {
            counts[i] += 1;
        }
        remaining -= batch.indices.len();
    }
    let expected = draws as f64 / cap as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((cap - 1) as f64).unwrap().cdf(chi2);
    ensure(p > 0.001, || {
        format!("chi-square {chi2:.2}, p = {p:.2e}, counts {counts:?}")
    })
}

/// Smoothed values stay within the range of the raw values seen so far.
pub fn ema_convexity() -> Result<(), String> {
    let mut rng = Rng::new(3);
    for case in 0..300 {
        let len = 1 + rng.below(60);
        let series: Vec<(f64, f64)> = (0..len).map(|i| (i as f64, rng.normal() * 100.0)).collect();
        let w = if case % 10 == 0 { 0.0 } else { rng.uniform() * 0.999 };
        let smoothed = ema_smooth(&series, w).map_err(|e| e.to_string())?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (raw, s) in series.iter().zip(&smoothed) {
            lo = lo.min(raw.1);
            hi = hi.max(raw.1);
            ensure(s.0 == raw.0, || "steps changed".into())?;
            ensure(s.1 >= lo - 1e-9 && s.1 <= hi + 1e-9, || {
                format!("case {case}: {} outside [{lo}, {hi}]", s.1)
            })?;
        }
    }
    Ok(())
}

pub fn manifest(exp_name: &str, run_id: &str) -> RunManifest {
    RunManifest {
        run_id: run_id.into(),
        exp_name: exp_name.into(),
        algo_id: "ppo".into(),
        env_id: "cartpole-v1".into(),
        seed: 1,
        config: serde_json::json!({ "seed": 1 }),
        invocation: "monorl train ppo".into(),
        start_time: "2026-01-01T00:00:00Z".into(),
        code_version: "0".repeat(64),
        sweep: None,
    }
}

/// Random event sequences written through a run handle parse back
/// unchanged, in order.
pub fn tracker_round_trip() -> Result<(), String> {
    use monorl_core::tracking::keys;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = Rng::new(5);
    let loggable: Vec<&str> = keys::ALL.iter().copied().filter(|k| !keys::is_wall_clock(k)).collect();
    for case in 0..40 {
        let mut run = open_run(dir.path(), manifest("rt", &format!("run{case:03}"))).map_err(|e| e.to_string())?;
        let n = rng.below(400);
        let mut steps = vec![0u64; loggable.len()];
        let mut written = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.below(loggable.len());
            steps[k] += rng.below(3) as u64;
            let value = match rng.below(4) {
                0 => rng.normal() * 1e-300,
                1 => rng.normal() * 1e300,
                2 => (rng.below(1000) as f64) - 500.0,
                _ => rng.normal(),
            };
            run.log_metric(steps[k], loggable[k], value)
                .map_err(|e| e.to_string())?;
            written.push((steps[k], loggable[k].to_string(), value));
        }
        let path = run.dir().to_path_buf();
        run.close().map_err(|e| e.to_string())?;
        let parsed = parse_run(&path).map_err(|e| e.to_string())?;
        let read: Vec<(u64, String, f64)> = parsed
            .metrics
            .iter()
            .map(|e: &MetricEvent| (e.step, e.key.clone(), e.value))
            .collect();
        ensure(read == written, || {
            format!(
                "case {case}: {} events written, {} differ on re-read",
                written.len(),
                read.len()
            )
        })?;
        let status = parsed.status.ok_or("missing status")?;
        ensure(status.completed && status.total_events == n as u64, || {
            format!("case {case}: bad status")
        })?;
    }
    Ok(())
}
