use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use super::{fan_in_uniform, join, standard_normal, Mode, Module, Param};
use crate::error::{Error, Result};
use crate::real::Real;

/// `y = x W + b` with `W: in x out`.
#[derive(Debug, Clone)]
pub struct Linear<F> {
    pub w: Param<F>,
    pub b: Param<F>,
    x: Option<Array2<F>>,
}

impl<F: Real> Linear<F> {
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        Self {
            w: Param::new(fan_in_uniform(n_in, n_out, n_in, rng)),
            b: Param::new(fan_in_uniform(1, n_out, n_in, rng)),
            x: None,
        }
    }

    pub fn n_in(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn forward(&mut self, x: Array2<F>) -> Result<Array2<F>> {
        if x.ncols() != self.n_in() {
            return Err(Error::shape(&[x.nrows(), self.n_in()], &[x.nrows(), x.ncols()]));
        }
        let y = x.dot(&self.w.value) + &self.b.value;
        self.x = Some(x);
        Ok(y)
    }

    /// Backpropagates `dy`. Parameter gradients are accumulated when
    /// `param_grads` is set; the input gradient is returned when `input_grad`
    /// is set.
    pub fn backward(&mut self, dy: &Array2<F>, param_grads: bool, input_grad: bool) -> Option<Array2<F>> {
        if param_grads {
            let x = self.x.as_ref().expect("backward before forward");
            ndarray::linalg::general_mat_mul(F::one(), &x.t(), dy, F::one(), &mut self.w.grad);
            self.b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        input_grad.then(|| dy.dot(&self.w.value.t()))
    }
}

impl<F: Real> Module<F> for Linear<F> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((join(prefix, "w"), &self.w));
        out.push((join(prefix, "b"), &self.b));
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((join(prefix, "w"), &mut self.w));
        out.push((join(prefix, "b"), &mut self.b));
    }
}

pub fn leaky_relu<F: Real>(x: &mut Array2<F>, alpha: F) {
    x.mapv_inplace(|v| if v > F::zero() { v } else { alpha * v });
}

/// `dy` is scaled in place using the activation output `y` (sign-preserving).
pub fn leaky_relu_backward<F: Real>(dy: &mut Array2<F>, y: &Array2<F>, alpha: F) {
    Zip::from(dy).and(y).for_each(|d, &v| {
        if v <= F::zero() {
            *d *= alpha;
        }
    });
}

/// Batch normalization over the batch axis with Keras-style momentum:
/// `running = momentum * running + (1 - momentum) * batch`.
#[derive(Debug, Clone)]
pub struct BatchNorm<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Param<F>,
    pub running_var: Param<F>,
    pub momentum: F,
    pub eps: F,
    cache: Option<(Array2<F>, Array1<F>)>,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(n: usize, momentum: f64) -> Self {
        Self {
            gamma: Param::new(Array2::ones((1, n))),
            beta: Param::new(Array2::zeros((1, n))),
            running_mean: Param::buffer(Array2::zeros((1, n))),
            running_var: Param::buffer(Array2::ones((1, n))),
            momentum: F::of(momentum),
            eps: F::of(1e-3),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: Array2<F>, mode: Mode) -> Array2<F> {
        match mode {
            Mode::Eval => {
                let inv = self.running_var.value.mapv(|v| F::one() / (v + self.eps).sqrt());
                (x - &self.running_mean.value) * inv * &self.gamma.value + &self.beta.value
            }
            Mode::Train => {
                let b = F::of(x.nrows() as f64);
                let mean = x.sum_axis(Axis(0)) / b;
                let centered = x - &mean;
                let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / b;
                let inv_std = var.mapv(|v| F::one() / (v + self.eps).sqrt());
                let xhat = centered * &inv_std;
                let m = self.momentum;
                let one_m = F::one() - m;
                Zip::from(self.running_mean.value.row_mut(0))
                    .and(&mean)
                    .for_each(|r, &v| *r = m * *r + one_m * v);
                Zip::from(self.running_var.value.row_mut(0))
                    .and(&var)
                    .for_each(|r, &v| *r = m * *r + one_m * v);
                let y = &xhat * &self.gamma.value + &self.beta.value;
                self.cache = Some((xhat, inv_std));
                y
            }
        }
    }

    /// Backward through a train-mode forward.
    pub fn backward(&mut self, dy: &Array2<F>) -> Array2<F> {
        let (xhat, inv_std) = self.cache.as_ref().expect("backward before train-mode forward");
        let b = F::of(dy.nrows() as f64);
        self.gamma.grad += &(dy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * &self.gamma.value;
        let sum_d = dxhat.sum_axis(Axis(0));
        let sum_dx = (&dxhat * xhat).sum_axis(Axis(0));
        let mut dx = dxhat * b - &sum_d - xhat * &sum_dx;
        dx *= &(inv_std / b);
        dx
    }
}

impl<F: Real> Module<F> for BatchNorm<F> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
        out.push((join(prefix, "running_mean"), &self.running_mean));
        out.push((join(prefix, "running_var"), &self.running_var));
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((join(prefix, "gamma"), &mut self.gamma));
        out.push((join(prefix, "beta"), &mut self.beta));
        out.push((join(prefix, "running_mean"), &mut self.running_mean));
        out.push((join(prefix, "running_var"), &mut self.running_var));
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone)]
pub struct Dropout<F> {
    pub rate: f64,
    mask: Option<Array2<F>>,
}

impl<F: Real> Dropout<F> {
    pub fn new(rate: f64) -> Self {
        Self { rate, mask: None }
    }

    pub fn forward<R: Rng + ?Sized>(&mut self, mut x: Array2<F>, mode: Mode, rng: &mut R) -> Array2<F> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return x;
        }
        let keep = F::of(1.0 / (1.0 - self.rate));
        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
            if rng.random::<f64>() < self.rate {
                F::zero()
            } else {
                keep
            }
        });
        x *= &mask;
        self.mask = Some(mask);
        x
    }

    pub fn backward(&self, dy: &mut Array2<F>) {
        if let Some(m) = &self.mask {
            *dy *= m;
        }
    }
}

/// Per-class learned vector, used multiplicatively on the layer input.
#[derive(Debug, Clone)]
pub struct Embedding<F> {
    pub table: Param<F>,
    labels: Vec<usize>,
}

impl<F: Real> Embedding<F> {
    pub fn new<R: Rng + ?Sized>(n_classes: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            table: Param::new(standard_normal(n_classes, dim, rng)),
            labels: Vec::new(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.table.value.nrows()
    }

    pub fn dim(&self) -> usize {
        self.table.value.ncols()
    }

    fn check(&self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|&&l| l >= self.n_classes()) {
            Some(l) => Err(Error::InvalidLabel(format!("class index {l} (have {})", self.n_classes()))),
            None => Ok(()),
        }
    }

    /// `x[k] * table[labels[k]]`, row by row.
    pub fn forward(&mut self, mut x: Array2<F>, labels: &[usize]) -> Result<Array2<F>> {
        self.check(labels)?;
        if x.nrows() != labels.len() || x.ncols() != self.dim() {
            return Err(Error::shape(&[labels.len(), self.dim()], &[x.nrows(), x.ncols()]));
        }
        for (mut row, &l) in x.rows_mut().into_iter().zip(labels) {
            row *= &self.table.value.row(l);
        }
        self.labels = labels.to_vec();
        Ok(x)
    }

    /// `x` is the un-embedded input seen by `forward`.
    pub fn backward(&mut self, x: &Array2<F>, dy: &Array2<F>, param_grads: bool, input_grad: bool) -> Option<Array2<F>> {
        if param_grads {
            for ((xr, dr), &l) in x.rows().into_iter().zip(dy.rows()).zip(&self.labels) {
                Zip::from(self.table.grad.row_mut(l))
                    .and(xr)
                    .and(dr)
                    .for_each(|g, &a, &d| *g += a * d);
            }
        }
        input_grad.then(|| {
            let mut dx = dy.clone();
            for (mut row, &l) in dx.rows_mut().into_iter().zip(&self.labels) {
                row *= &self.table.value.row(l);
            }
            dx
        })
    }
}

impl<F: Real> Module<F> for Embedding<F> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        out.push((join(prefix, "table"), &self.table));
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        out.push((join(prefix, "table"), &mut self.table));
    }
}
