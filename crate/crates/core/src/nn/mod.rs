//! Small differentiable-layer toolkit: strided and transposed convolution,
//! batch normalization, activations, linear/embedding layers, binary
//! cross-entropy and Adam.
//!
//! Layers cache what they need during [`Layer::forward`] and consume the cache
//! in [`Layer::backward`], which accumulates parameter gradients and returns
//! the gradient with respect to the layer input. A second `backward` without a
//! fresh forward fails with [`NnError::GraphNotRecorded`].

mod activation;
mod conv;
mod linear;
mod loss;
mod norm;
mod optim;
mod scalar;
mod tensor;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use activation::{LeakyRelu, Relu, Sigmoid, Tanh};
pub use conv::{conv_output_size, deconv_output_size, Conv2d, ConvTranspose2d};
pub use linear::{Embedding, Linear};
pub use loss::{bce_loss, bce_with_logits, sigmoid};
pub use norm::BatchNorm2d;
pub use optim::{Adam, AdamConfig, Moments};
pub use scalar::Scalar;
pub use tensor::Tensor4;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch of {0} cannot be normalized in training mode")]
    DegenerateBatch(usize),
    #[error("backward called on {0} without a recorded forward pass")]
    GraphNotRecorded(String),
    #[error("non-finite values leaving {0}")]
    NonFinite(String),
}

/// Forward-pass mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; `update_running` controls whether batch norm
    /// folds them into its running estimates.
    Train { update_running: bool },
    /// Running statistics.
    Eval,
}

impl Mode {
    pub const TRAIN: Mode = Mode::Train { update_running: true };
}

/// A named tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::filled(name, shape, T::zero())
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![value; len],
            grad: vec![T::zero(); len],
        }
    }

    pub fn normal<R: Rng + ?Sized>(name: impl Into<String>, shape: &[usize], std: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(name, shape);
        let dist = Normal::new(0.0, std).expect("positive std");
        p.value.iter_mut().for_each(|v| *v = T::lit(dist.sample(rng)));
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// A differentiable layer over NCHW tensors.
pub trait Layer<T: Scalar> {
    fn forward(&mut self, input: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>, NnError>;

    fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<Tensor4<T>, NnError>;

    /// Inference-mode forward on frozen parameters; records nothing.
    fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    /// Non-trainable persistent state (running statistics).
    fn buffers(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }
}
