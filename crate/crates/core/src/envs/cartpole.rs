use super::{Action, ActionSpace, Env, EnvStep, CARTPOLE_V1};
use crate::{Error, Result, Rng};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
pub const X_THRESHOLD: f64 = 2.4;
pub const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const MAX_STEPS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub steps: u64,
}

impl CartPoleState {
    pub fn random(rng: &mut Rng) -> Self {
        Self {
            x: rng.uniform_range(-0.05, 0.05),
            x_dot: rng.uniform_range(-0.05, 0.05),
            theta: rng.uniform_range(-0.05, 0.05),
            theta_dot: rng.uniform_range(-0.05, 0.05),
            steps: 0,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }

    fn out_of_bounds(&self) -> bool {
        self.x.abs() > X_THRESHOLD || self.theta.abs() > THETA_THRESHOLD
    }
}

/// One explicit-Euler step. `action` 1 pushes right, 0 pushes left.
pub fn cartpole_step(state: &CartPoleState, action: usize) -> Result<(CartPoleState, EnvStep)> {
    if action > 1 {
        return Err(Error::InvalidArgument(format!(
            "cartpole action must be 0 or 1, got {action}"
        )));
    }
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let (sin, cos) = state.theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * state.theta_dot * state.theta_dot * sin) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;

    let next = CartPoleState {
        x: state.x + TAU * state.x_dot,
        x_dot: state.x_dot + TAU * x_acc,
        theta: state.theta + TAU * state.theta_dot,
        theta_dot: state.theta_dot + TAU * theta_acc,
        steps: state.steps + 1,
    };
    let terminated = next.out_of_bounds();
    let truncated = !terminated && next.steps >= MAX_STEPS;
    let step = EnvStep {
        obs: next.observation(),
        reward: 1.0,
        terminated,
        truncated,
        info: None,
    };
    Ok((next, step))
}

#[derive(Debug, Clone, Default)]
pub struct CartPole {
    state: CartPoleState,
}

impl CartPole {
    pub fn state(&self) -> &CartPoleState {
        &self.state
    }
}

impl Env for CartPole {
    fn id(&self) -> &'static str {
        CARTPOLE_V1
    }

    fn observation_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = CartPoleState::random(rng);
        self.state.observation()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        let Action::Discrete(a) = *action else {
            return Err(Error::InvalidArgument("cartpole takes discrete actions".into()));
        };
        let (next, step) = cartpole_step(&self.state, a)?;
        self.state = next;
        Ok(step)
    }
}
