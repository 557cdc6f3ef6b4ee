//! Minimal dense-layer toolkit with hand-written backward passes.
//!
//! Activations are batch-major `Array2` (rows = samples). Layers cache what
//! their backward pass needs during `forward` and accumulate parameter
//! gradients into [`Param::grad`].

mod adam;
mod layers;

pub use adam::{Adam, AdamConfig};
pub use layers::{leaky_relu, leaky_relu_backward, BatchNorm, Dropout, Embedding, Linear};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

/// A tensor with its gradient accumulator. Vectors are stored as `1 x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub value: Array2<F>,
    pub grad: Array2<F>,
    /// False for running statistics, which are saved but never optimized.
    pub trainable: bool,
}

impl<F: Real> Param<F> {
    pub fn new(value: Array2<F>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(value: Array2<F>) -> Self {
        Self {
            trainable: false,
            ..Self::new(value)
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns named parameters.
pub trait Module<F: Real> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>);

    fn params(&self) -> Vec<(String, &Param<F>)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<F>)> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    fn n_params(&self) -> usize {
        self.params().iter().filter(|(_, p)| p.trainable).map(|(_, p)| p.len()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn fan_in_uniform<F: Real, R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<F> {
    let a = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || F::of(dist.sample(rng)))
}

/// Glorot/Xavier uniform.
pub fn glorot_uniform<F: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<F> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || F::of(dist.sample(rng)))
}

pub fn standard_normal<F: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<F> {
    Array2::from_shape_simple_fn((rows, cols), || F::of(StandardNormal.sample(rng)))
}

/// Square orthogonal matrix from the QR factors of a Gaussian matrix, with
/// the sign of `R`'s diagonal folded in so the draw is Haar distributed.
pub fn orthogonal<F: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<F> {
    let a = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let q = qr.q();
    let r = qr.r();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        F::of(q[(i, j)] * s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q: Array2<f64> = orthogonal(7, &mut rng);
        let qtq = q.t().dot(&q);
        for ((i, j), v) in qtq.indexed_iter() {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w: Array2<f32> = fan_in_uniform(16, 8, 16, &mut rng);
        assert!(w.iter().all(|v| v.abs() <= 0.25));
    }
}
