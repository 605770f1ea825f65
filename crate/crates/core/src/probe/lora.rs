//! Low-rank adapters for frozen dense layers.

use ndarray::Array2;

use super::nn::standard;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Adds `scale * B A` to a frozen `out x in` weight, with `A: r x in` and
/// `B: out x r`. `B` starts at zero so a fresh adapter is a no-op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraGrads {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl LoraAdapter {
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rank: usize, alpha: f64, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(input as f64);
        LoraAdapter {
            a: Array2::from_shape_fn((rank, input), |_| rng.random_range(-bound..bound)),
            b: Array2::zeros((output, rank)),
            scale: alpha / rank as f64,
        }
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.a.len() + self.b.len()
    }

    /// Returns `(delta_y, u)` where `u = x A^T` is kept for the backward pass.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let u = x.dot(&self.a.t());
        let delta = u.dot(&self.b.t()) * self.scale;
        (delta, u)
    }

    /// Returns `(dx, grads)`.
    pub fn backward(&self, x: &Array2<f64>, u: &Array2<f64>, dy: &Array2<f64>) -> (Array2<f64>, LoraGrads) {
        let b = standard(dy.t().dot(u) * self.scale);
        let du = dy.dot(&self.b) * self.scale;
        let a = standard(du.t().dot(x));
        (du.dot(&self.a), LoraGrads { a, b })
    }
}

impl LoraGrads {
    pub fn zeros_like(l: &LoraAdapter) -> Self {
        LoraGrads {
            a: Array2::zeros(l.a.raw_dim()),
            b: Array2::zeros(l.b.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &LoraGrads) {
        self.a += &other.a;
        self.b += &other.b;
    }
}
