use super::matrix::Scalar;
use super::mlp::GradSet;
use crate::{Error, Result};

/// Anything holding gradient tensors that take part in joint norm clipping.
pub trait GradTensors<T> {
    fn grad_slices_mut(&mut self) -> Vec<&mut [T]>;
}

impl<T: Scalar> GradTensors<T> for GradSet<T> {
    fn grad_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.slices_mut()
    }
}

impl<T: Scalar> GradTensors<T> for Vec<T> {
    fn grad_slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.as_mut_slice()]
    }
}

/// Clips the global L2 norm taken jointly over every tensor of every group.
///
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(groups: &mut [&mut dyn GradTensors<T>], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::InvalidArgument(format!("max_norm must be > 0, got {max_norm}")));
    }
    let mut sq = 0.0f64;
    for group in groups.iter_mut() {
        for s in group.grad_slices_mut() {
            sq += s.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradient norm".into()));
    }
    if norm > max_norm {
        let scale = T::of(max_norm / norm);
        for group in groups.iter_mut() {
            for s in group.grad_slices_mut() {
                for x in s.iter_mut() {
                    *x = *x * scale;
                }
            }
        }
    }
    Ok(norm)
}
