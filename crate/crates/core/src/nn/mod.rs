//! Minimal CPU training substrate: NCHW `f32` tensors, convolution via
//! im2col + GEMM, and hand-written backward passes.
//!
//! Layers are stateless with respect to activations. A network's
//! `forward_train` returns whatever its `backward` needs; parameter gradients
//! accumulate into [`Param::grad`] until [`Sgd::step`] consumes them.

mod conv;
mod ops;
mod optim;

pub use conv::Conv2d;
pub use ops::{
    concat_channels, flip_spatial, global_avg_pool, global_avg_pool_backward, maxpool2,
    maxpool2_backward, relu, relu_backward_inplace, sigmoid_inplace, split_channels, upsample2,
    upsample2_backward, Linear, PoolIndex,
};
pub use optim::Sgd;

use ndarray::Array4;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Batch of images or feature maps, shape (N, C, H, W), standard layout.
pub type Tensor = Array4<f32>;

/// A trainable parameter with its gradient accumulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    #[serde(skip)]
    pub grad: Vec<f32>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// He-normal initialisation, `std = sqrt(2 / fan_in)`.
    pub fn he_normal(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(name, shape);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
        for v in &mut p.value {
            *v = normal.sample(rng) as f32;
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt()
    }

    /// Restores the gradient buffer after deserialization.
    pub fn ensure_grad(&mut self) {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_tensor(shape: (usize, usize, usize, usize), seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_shape_fn(shape, |_| rng.random_range(-1.0f32..1.0))
    }

    /// `Σ w ⊙ y`, a scalar probe whose gradient w.r.t. `y` is `w`.
    pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.iter().zip(b.iter()).map(|(&x, &y)| x as f64 * y as f64).sum()
    }
}
