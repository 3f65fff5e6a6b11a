use std::f64::consts::PI;

use super::{Action, ActionSpace, Env, EnvStep, PENDULUM_V1};
use crate::{Error, Result, Rng};

const G: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DT: f64 = 0.05;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_STEPS: u64 = 200;

/// Wraps an angle into `[−π, π)`.
pub fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
    pub steps: u64,
}

impl PendulumState {
    pub fn random(rng: &mut Rng) -> Self {
        Self {
            theta: rng.uniform_range(-PI, PI),
            theta_dot: rng.uniform_range(-1.0, 1.0),
            steps: 0,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

/// Semi-implicit Euler step; torque is clipped to `±MAX_TORQUE`.
pub fn pendulum_step(state: &PendulumState, torque: f64) -> (PendulumState, EnvStep) {
    let u = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
    let th = state.theta;
    let thd = state.theta_dot;
    let cost = angle_normalize(th).powi(2) + 0.1 * thd * thd + 0.001 * u * u;

    let new_thd = (thd + (3.0 * G / (2.0 * LENGTH) * th.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u) * DT)
        .clamp(-MAX_SPEED, MAX_SPEED);
    let new_th = angle_normalize(th + new_thd * DT);
    let next = PendulumState {
        theta: new_th,
        theta_dot: new_thd,
        steps: state.steps + 1,
    };
    let step = EnvStep {
        obs: next.observation(),
        reward: -cost,
        terminated: false,
        truncated: next.steps >= MAX_STEPS,
        info: None,
    };
    (next, step)
}

#[derive(Debug, Clone, Default)]
pub struct Pendulum {
    state: PendulumState,
}

impl Pendulum {
    pub fn state(&self) -> &PendulumState {
        &self.state
    }
}

impl Env for Pendulum {
    fn id(&self) -> &'static str {
        PENDULUM_V1
    }

    fn observation_dim(&self) -> usize {
        3
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous {
            dim: 1,
            low: -MAX_TORQUE,
            high: MAX_TORQUE,
        }
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = PendulumState::random(rng);
        self.state.observation()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        let torque = match action {
            Action::Continuous(v) if v.len() == 1 => v[0],
            _ => return Err(Error::InvalidArgument("pendulum takes one continuous torque".into())),
        };
        if !torque.is_finite() {
            return Err(Error::NonFinite("pendulum torque".into()));
        }
        let (next, step) = pendulum_step(&self.state, torque);
        self.state = next;
        Ok(step)
    }
}
