use serde::{Deserialize, Serialize};

use super::matrix::Scalar;
use super::mlp::{GradSet, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// `eps = 1e-8`, the usual default.
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// `eps = 1e-5`, as used by the PPO family.
    pub fn ppo(lr: f64) -> Self {
        Self {
            eps: 1e-5,
            ..Self::new(lr)
        }
    }
}

/// Moment accumulators for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    /// State for tensors of the given lengths.
    pub fn new(lens: &[usize], config: AdamConfig) -> Self {
        Self {
            m: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
            config,
        }
    }

    pub fn for_mlp(mlp: &Mlp<T>, config: AdamConfig) -> Self {
        let lens: Vec<usize> = mlp.param_slices().iter().map(|s| s.len()).collect();
        Self::new(&lens, config)
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One bias-corrected Adam update over matching parameter/gradient slices.
    ///
    /// Fails without touching anything if shapes disagree or any gradient
    /// entry is non-finite.
    pub fn step_slices(&mut self, params: Vec<&mut [T]>, grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam tensors",
                self.m.len(),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape(
                    "adam tensor length",
                    m.len(),
                    format!("{} params / {} grads", p.len(), g.len()),
                ));
            }
        }
        if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("adam gradient".into()));
        }

        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (ob1, ob2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        let (inv_bc1, inv_bc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));

        // zipped iterators keep the loop free of bounds checks so it vectorizes
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + ob1 * g;
                *v = b2 * *v + ob2 * g * g;
                let m_hat = *m * inv_bc1;
                let v_hat = *v * inv_bc2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Adam update of `mlp` in place.
pub fn adam_step<T: Scalar>(mlp: &mut Mlp<T>, grads: &GradSet<T>, state: &mut AdamState<T>) -> Result<()> {
    let g = grads.slices();
    state.step_slices(mlp.param_slices_mut(), &g)
}
