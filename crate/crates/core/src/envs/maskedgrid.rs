//! 5×5 gridworld whose legal-action set changes with position.
//!
//! Actions: 0 up (row − 1), 1 down (row + 1), 2 left (col − 1), 3 right
//! (col + 1). Moves that would leave the grid are masked out and rejected.
//! Observation is a one-hot encoding of the agent cell.

use super::{Action, ActionSpace, Env, EnvStep, MASKEDGRID_V0};
use crate::{Error, Result, Rng};

pub const GRID_SIZE: usize = 5;
pub const GOAL: (usize, usize) = (GRID_SIZE - 1, GRID_SIZE - 1);
pub const STEP_PENALTY: f64 = -0.01;
pub const GOAL_REWARD: f64 = 1.0;
pub const MAX_STEPS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub struct MaskedGridState {
    pub agent: (usize, usize),
    pub steps: u64,
}


fn target(agent: (usize, usize), action: usize) -> Option<(usize, usize)> {
    let (r, c) = agent;
    match action {
        0 if r > 0 => Some((r - 1, c)),
        1 if r + 1 < GRID_SIZE => Some((r + 1, c)),
        2 if c > 0 => Some((r, c - 1)),
        3 if c + 1 < GRID_SIZE => Some((r, c + 1)),
        _ => None,
    }
}

impl MaskedGridState {
    /// Uniform over non-goal cells.
    pub fn random(rng: &mut Rng) -> Self {
        let cell = rng.below(GRID_SIZE * GRID_SIZE - 1);
        Self {
            agent: (cell / GRID_SIZE, cell % GRID_SIZE),
            steps: 0,
        }
    }

    pub fn mask(&self) -> [bool; 4] {
        std::array::from_fn(|a| target(self.agent, a).is_some())
    }

    pub fn observation(&self) -> Vec<f64> {
        let mut obs = vec![0.0; GRID_SIZE * GRID_SIZE];
        obs[self.agent.0 * GRID_SIZE + self.agent.1] = 1.0;
        obs
    }
}

pub fn maskedgrid_step(state: &MaskedGridState, action: usize) -> Result<(MaskedGridState, EnvStep)> {
    let agent = target(state.agent, action).ok_or(Error::IllegalAction { action })?;
    let next = MaskedGridState {
        agent,
        steps: state.steps + 1,
    };
    let terminated = agent == GOAL;
    let reward = STEP_PENALTY + if terminated { GOAL_REWARD } else { 0.0 };
    let step = EnvStep {
        obs: next.observation(),
        reward,
        terminated,
        truncated: !terminated && next.steps >= MAX_STEPS,
        info: None,
    };
    Ok((next, step))
}

#[derive(Debug, Clone, Default)]
pub struct MaskedGrid {
    state: MaskedGridState,
}

impl MaskedGrid {
    pub fn state(&self) -> &MaskedGridState {
        &self.state
    }
}

impl Env for MaskedGrid {
    fn id(&self) -> &'static str {
        MASKEDGRID_V0
    }

    fn observation_dim(&self) -> usize {
        GRID_SIZE * GRID_SIZE
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::DiscreteMasked(4)
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = MaskedGridState::random(rng);
        self.state.observation()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        let Action::Discrete(a) = *action else {
            return Err(Error::InvalidArgument("maskedgrid takes discrete actions".into()));
        };
        let (next, step) = maskedgrid_step(&self.state, a)?;
        self.state = next;
        Ok(step)
    }

    fn action_mask(&self) -> Option<Vec<bool>> {
        Some(self.state.mask().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn up_from_origin_is_illegal() {
        let s = MaskedGridState::default();
        assert!(matches!(
            maskedgrid_step(&s, 0),
            Err(Error::IllegalAction { action: 0 })
        ));
    }

    #[test]
    fn reaching_goal_pays_099() {
        let s = MaskedGridState {
            agent: (4, 3),
            steps: 3,
        };
        let (_, st) = maskedgrid_step(&s, 3).unwrap();
        assert!(st.terminated);
        assert!((st.reward - 0.99).abs() < 1e-12);
    }

    #[test]
    fn optimal_path_returns_092() {
        let mut s = MaskedGridState::default();
        let mut ret = 0.0;
        for a in [1, 1, 1, 1, 3, 3, 3, 3] {
            let (n, st) = maskedgrid_step(&s, a).unwrap();
            ret += st.reward;
            s = n;
        }
        assert_eq!(s.agent, GOAL);
        assert!((ret - 0.92).abs() < 1e-12);
    }

    #[test]
    fn mask_is_false_iff_move_exits_grid() {
        for r in 0..GRID_SIZE {
            for c in 0..GRID_SIZE {
                let s = MaskedGridState {
                    agent: (r, c),
                    steps: 0,
                };
                let m = s.mask();
                assert_eq!(m[0], r > 0);
                assert_eq!(m[1], r < GRID_SIZE - 1);
                assert_eq!(m[2], c > 0);
                assert_eq!(m[3], c < GRID_SIZE - 1);
                for a in 0..4 {
                    assert_eq!(maskedgrid_step(&s, a).is_ok(), m[a]);
                }
            }
        }
    }

    #[test]
    fn random_start_never_on_goal() {
        let mut rng = Rng::new(0);
        for _ in 0..500 {
            assert_ne!(MaskedGridState::random(&mut rng).agent, GOAL);
        }
    }

    #[test]
    fn truncates_at_100() {
        let s = MaskedGridState {
            agent: (0, 0),
            steps: 99,
        };
        let (_, st) = maskedgrid_step(&s, 1).unwrap();
        assert!(st.truncated && !st.terminated);
    }
}
