//! Minimal deterministic neural-network kernel.
//!
//! Parameters and activations are generic over [`Scalar`] so training can run
//! in `f32` while gradient checks and oracles run the same code in `f64`.

mod adam;
mod clip;
mod denormal;
pub mod distributions;
mod init;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use clip::{clip_grad_norm, GradTensors};
pub use denormal::FlushDenormals;
pub use distributions::{
    tanh_gaussian_sample_logprob, Categorical, DiagGaussian, TanhGaussianSample, LOG_STD_MAX, LOG_STD_MIN,
};
pub use init::orthogonal_init;
pub use matrix::{Matrix, Scalar};
pub use mlp::{polyak_update, Activation, Dense, ForwardCache, GradSet, LayerSpec, Mlp};
