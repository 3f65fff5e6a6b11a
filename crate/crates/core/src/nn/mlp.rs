//! Multi-layer perceptron with exact reverse-mode gradients.
//!
//! Each layer computes `y = act(x · Wᵀ + b)` on a row-major batch. Backward
//! passes return gradients *summed* over the batch; losses divide by the batch
//! size themselves.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::init::orthogonal_init;
use super::matrix::{gemm, Matrix, Scalar};
use crate::{Error, Result, Rng};

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

/// Shape record of one layer, as stored in `arch.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(rename = "in")]
    pub in_dim: usize,
    #[serde(rename = "out")]
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `out × in`
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            in_dim: self.in_dim(),
            out_dim: self.out_dim(),
            activation: self.activation,
        }
    }
}

/// Feed-forward network of dense layers.
///
/// Every instance carries an identity and a parameter version; a
/// [`ForwardCache`] is only accepted by the exact network state that produced
/// it. Cloning yields a new identity.
#[derive(Debug)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    id: u64,
    version: u64,
}

impl<T: Scalar> Clone for Mlp<T> {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl<T: Scalar> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`Mlp::forward`]: `activations[0]` is the input,
/// `activations[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    net_id: u64,
    version: u64,
    activations: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Matrix<T> {
        &self.activations[0]
    }
}

/// Gradients shaped like an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet<T> {
    pub layers: Vec<(Matrix<T>, Vec<T>)>,
}

impl<T: Scalar> GradSet<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.out_dim(), l.in_dim()), vec![T::zero(); l.out_dim()]))
                .collect(),
        }
    }

    /// Slices in parameter order: `W0, b0, W1, b1, ...`.
    pub fn slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape(
                "GradSet::add_assign",
                self.layers.len(),
                other.layers.len(),
            ));
        }
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            if dst.len() != src.len() {
                return Err(Error::shape("GradSet::add_assign", dst.len(), src.len()));
            }
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for s in self.slices_mut() {
            for x in s {
                *x = *x * factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

impl<T: Scalar> Mlp<T> {
    /// Assembles a network, checking that consecutive layer shapes chain.
    pub fn new(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape("Mlp::new bias", layer.out_dim(), layer.bias.len()));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(Error::InvalidArgument(format!("layer {i} has a zero dimension")));
            }
            if i > 0 && layers[i - 1].out_dim() != layer.in_dim() {
                return Err(Error::shape(
                    "Mlp::new layer chain",
                    layers[i - 1].out_dim(),
                    layer.in_dim(),
                ));
            }
        }
        Ok(Self {
            layers,
            id: fresh_id(),
            version: 0,
        })
    }

    /// All-zero network with `sizes = [input, hidden.., output]`.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        Self::build(sizes, hidden, output, |rows, cols, _| {
            (Matrix::zeros(rows, cols), vec![T::zero(); rows])
        })
    }

    /// Orthogonal weights (`hidden_gain` for hidden layers, `output_gain` for
    /// the last), zero biases.
    pub fn orthogonal(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let n_layers = sizes.len().saturating_sub(1);
        Self::build(sizes, hidden, output, |rows, cols, idx| {
            let gain = if idx + 1 == n_layers { output_gain } else { hidden_gain };
            (orthogonal_init(rows, cols, gain, rng), vec![T::zero(); rows])
        })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn fan_in_uniform(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Result<Self> {
        Self::build(sizes, hidden, output, |rows, cols, _| {
            let bound = 1.0 / (cols as f64).sqrt();
            let mut w = Matrix::zeros(rows, cols);
            for x in w.as_mut_slice() {
                *x = T::of(rng.uniform_range(-bound, bound));
            }
            let b = (0..rows).map(|_| T::of(rng.uniform_range(-bound, bound))).collect();
            (w, b)
        })
    }

    fn build(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        mut make: impl FnMut(usize, usize, usize) -> (Matrix<T>, Vec<T>),
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "network sizes need an input and an output dimension".into(),
            ));
        }
        let n_layers = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for (idx, pair) in sizes.windows(2).enumerate() {
            if pair[0] == 0 || pair[1] == 0 {
                return Err(Error::InvalidArgument(format!("layer {idx} has a zero dimension")));
            }
            let (weight, bias) = make(pair[1], pair[0], idx);
            let activation = if idx + 1 == n_layers { output } else { hidden };
            layers.push(Dense {
                weight,
                bias,
                activation,
            });
        }
        Self::new(layers)
    }

    /// Rebuilds a network from layer specs and a flat parameter vector laid
    /// out as `W0 (row-major), b0, W1, b1, ...`.
    pub fn from_specs(specs: &[LayerSpec], params: &[T]) -> Result<Self> {
        let expected: usize = specs.iter().map(|s| s.out_dim * (s.in_dim + 1)).sum();
        if params.len() != expected {
            return Err(Error::shape("Mlp::from_specs params", expected, params.len()));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(specs.len());
        for s in specs {
            let nw = s.out_dim * s.in_dim;
            let weight = Matrix::from_vec(s.out_dim, s.in_dim, params[offset..offset + nw].to_vec())?;
            offset += nw;
            let bias = params[offset..offset + s.out_dim].to_vec();
            offset += s.out_dim;
            layers.push(Dense {
                weight,
                bias,
                activation: s.activation,
            });
        }
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Dense::spec).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim() * (l.in_dim() + 1)).sum()
    }

    pub fn param_slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// Mutable parameter slices. Invalidates outstanding forward caches.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.param_slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    fn check_input(&self, batch: &Matrix<T>) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape("Mlp input columns", self.input_dim(), batch.cols()));
        }
        Ok(())
    }

    fn layer_forward(layer: &Dense<T>, x: &Matrix<T>) -> Matrix<T> {
        let mut y = Matrix::zeros(x.rows(), layer.out_dim());
        for i in 0..x.rows() {
            y.row_mut(i).copy_from_slice(&layer.bias);
        }
        gemm(T::one(), x, false, &layer.weight, true, T::one(), &mut y);
        if layer.activation != Activation::Identity {
            for v in y.as_mut_slice() {
                *v = layer.activation.apply(*v);
            }
        }
        y
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(batch)?;
        let mut x = Self::layer_forward(&self.layers[0], batch);
        for layer in &self.layers[1..] {
            x = Self::layer_forward(layer, &x);
        }
        Ok(x)
    }

    pub fn forward(&self, batch: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.clone());
        for layer in &self.layers {
            let y = Self::layer_forward(layer, activations.last().unwrap());
            activations.push(y);
        }
        let out = activations.last().unwrap().clone();
        Ok((
            out,
            ForwardCache {
                net_id: self.id,
                version: self.version,
                activations,
            },
        ))
    }

    fn check_cache(&self, cache: &ForwardCache<T>, grad_out: &Matrix<T>) -> Result<()> {
        if cache.net_id != self.id {
            return Err(Error::StaleCache("cache was produced by a different network"));
        }
        if cache.version != self.version {
            return Err(Error::StaleCache("parameters changed since the forward pass"));
        }
        let out = cache.output();
        if grad_out.shape() != out.shape() {
            return Err(Error::shape(
                "Mlp::backward grad_out",
                format!("{:?}", out.shape()),
                format!("{:?}", grad_out.shape()),
            ));
        }
        Ok(())
    }

    /// Gradient w.r.t. the pre-activation of layer `l`, given the gradient
    /// w.r.t. its output.
    fn pre_activation_grad(&self, l: usize, cache: &ForwardCache<T>, mut g: Matrix<T>) -> Matrix<T> {
        let act = self.layers[l].activation;
        if act != Activation::Identity {
            let y = &cache.activations[l + 1];
            for (gv, &yv) in g.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *gv = *gv * act.derivative_from_output(yv);
            }
        }
        g
    }

    /// Reverse-mode pass. Returns parameter gradients (summed over the batch)
    /// and the gradient w.r.t. the input batch.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Matrix<T>) -> Result<(GradSet<T>, Matrix<T>)> {
        self.check_cache(cache, grad_out)?;
        let mut grads = GradSet::zeros_like(self);
        let mut g = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let gpre = self.pre_activation_grad(l, cache, g);
            let x = &cache.activations[l];
            let (dw, db) = &mut grads.layers[l];
            gemm(T::one(), &gpre, true, x, false, T::zero(), dw);
            for i in 0..gpre.rows() {
                for (b, &v) in db.iter_mut().zip(gpre.row(i)) {
                    *b = *b + v;
                }
            }
            let mut gin = Matrix::zeros(gpre.rows(), layer.in_dim());
            gemm(T::one(), &gpre, false, &layer.weight, false, T::zero(), &mut gin);
            g = gin;
        }
        Ok((grads, g))
    }

    /// Gradient w.r.t. the input only; skips parameter gradients.
    pub fn input_gradient(&self, cache: &ForwardCache<T>, grad_out: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_cache(cache, grad_out)?;
        let mut g = grad_out.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let gpre = self.pre_activation_grad(l, cache, g);
            let mut gin = Matrix::zeros(gpre.rows(), layer.in_dim());
            gemm(T::one(), &gpre, false, &layer.weight, false, T::zero(), &mut gin);
            g = gin;
        }
        Ok(g)
    }

    /// Copies parameters from `other` (same architecture).
    pub fn copy_from(&mut self, other: &Self) -> Result<()> {
        polyak_update(self, other, 1.0)
    }
}

/// Soft target update `target ← tau·online + (1 − tau)·target`.
pub fn polyak_update<T: Scalar>(target: &mut Mlp<T>, online: &Mlp<T>, tau: f64) -> Result<()> {
    if target.specs() != online.specs() {
        return Err(Error::shape(
            "polyak_update architectures",
            format!("{:?}", online.specs()),
            format!("{:?}", target.specs()),
        ));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {tau}")));
    }
    let tau_t = T::of(tau);
    let keep = T::of(1.0 - tau);
    let src = online.param_slices();
    for (dst, src) in target.param_slices_mut().into_iter().zip(src) {
        if tau == 1.0 {
            dst.copy_from_slice(src);
        } else {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = tau_t * s + keep * *d;
            }
        }
    }
    Ok(())
}
