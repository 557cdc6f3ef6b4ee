use ndarray::{Array1, Array2, Array3};
use rand::Rng;

use super::seq::{flatten_steps, swap_leading, unflatten_steps};
use super::{check_labels, ModelConfig, RecurrentLayer, N_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{join, leaky_relu, leaky_relu_backward, BatchNorm, Embedding, Linear, Mode, Module, Param};
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct Generator<F> {
    pub embedding: Embedding<F>,
    pub hidden: Vec<Linear<F>>,
    pub norms: Vec<BatchNorm<F>>,
    pub expand: Linear<F>,
    pub recurrent: Vec<RecurrentLayer<F>>,
    pub project: Linear<F>,
    n_snapshots: usize,
    n_bins: usize,
    slope: F,
    z: Option<Array2<F>>,
    activations: Vec<Array2<F>>,
    /// `tanh` output in `(T, B, D)` layout.
    out: Option<Array3<F>>,
}

impl<F: Real> Generator<F> {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, n_snapshots: usize, n_bins: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if n_snapshots == 0 || n_bins == 0 {
            return Err(Error::InvalidConfig("output grid must be non-empty".into()));
        }
        let embedding = Embedding::new(N_CLASSES, cfg.latent_dim, rng);
        let mut width = cfg.latent_dim;
        let mut hidden = Vec::new();
        let mut norms = Vec::new();
        for &w in &cfg.generator_hidden {
            hidden.push(Linear::new(width, w, rng));
            norms.push(BatchNorm::new(w, cfg.batchnorm_momentum));
            width = w;
        }
        let expand = Linear::new(width, n_snapshots * n_bins, rng);
        let recurrent = (0..cfg.recurrent_layers)
            .map(|_| RecurrentLayer::new(cfg.recurrence, n_bins, n_bins, rng))
            .collect();
        let project = Linear::new(n_bins, n_bins, rng);
        Ok(Self {
            embedding,
            hidden,
            norms,
            expand,
            recurrent,
            project,
            n_snapshots,
            n_bins,
            slope: F::of(cfg.leaky_slope),
            z: None,
            activations: Vec::new(),
            out: None,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.embedding.dim()
    }

    pub fn output_shape(&self) -> (usize, usize) {
        (self.n_snapshots, self.n_bins)
    }

    /// `z: (B, latent)` with one label per row; returns `(B, T, D)` in `(-1, 1)`.
    pub fn forward(&mut self, z: &Array2<F>, labels: &[usize], mode: Mode) -> Result<Array3<F>> {
        check_labels(labels)?;
        if z.ncols() != self.latent_dim() || z.nrows() != labels.len() {
            return Err(Error::shape(&[labels.len(), self.latent_dim()], &[z.nrows(), z.ncols()]));
        }
        let b = z.nrows();
        let mut h = self.embedding.forward(z.clone(), labels)?;
        self.activations.clear();
        for (lin, bn) in self.hidden.iter_mut().zip(&mut self.norms) {
            h = bn.forward(lin.forward(h)?, mode);
            leaky_relu(&mut h, self.slope);
            self.activations.push(h.clone());
        }
        let flat = self.expand.forward(h)?;
        let batch_major = flat
            .into_shape_with_order((b, self.n_snapshots, self.n_bins))
            .expect("expand output is contiguous");
        let mut seq = swap_leading(&batch_major);
        for layer in &mut self.recurrent {
            seq = layer.forward(&seq)?;
        }
        let y = self.project.forward(flatten_steps(&seq))?.mapv(F::tanh);
        let y = unflatten_steps(y, self.n_snapshots, b);
        let out = swap_leading(&y);
        self.z = Some(z.clone());
        self.out = Some(y);
        Ok(out)
    }

    /// Eval-mode forward for a single latent vector.
    pub fn sample(&mut self, z: &Array1<F>, label: usize) -> Result<Array2<F>> {
        let z = z.view().insert_axis(ndarray::Axis(0)).to_owned();
        let out = self.forward(&z, &[label], Mode::Eval)?;
        Ok(out.index_axis_move(ndarray::Axis(0), 0))
    }

    /// Accumulates parameter gradients from `d_out: (B, T, D)`. Requires the
    /// preceding forward to have run in train mode.
    pub fn backward(&mut self, d_out: &Array3<F>) {
        let y = self.out.as_ref().expect("backward before forward");
        let b = d_out.dim().0;
        let one = F::one();
        let mut d = swap_leading(d_out);
        ndarray::Zip::from(&mut d).and(y).for_each(|g, &v| *g *= one - v * v);
        let d = self.project.backward(&flatten_steps(&d), true, true).expect("input grad");
        let mut d_seq = unflatten_steps(d, self.n_snapshots, b);
        for layer in self.recurrent.iter_mut().rev() {
            d_seq = layer.backward(&d_seq, true, true).expect("input grad");
        }
        let d_flat = swap_leading(&d_seq)
            .into_shape_with_order((b, self.n_snapshots * self.n_bins))
            .expect("standard layout");
        let mut dh = self.expand.backward(&d_flat, true, true).expect("input grad");
        for k in (0..self.hidden.len()).rev() {
            leaky_relu_backward(&mut dh, &self.activations[k], self.slope);
            dh = self.norms[k].backward(&dh);
            dh = self.hidden[k].backward(&dh, true, true).expect("input grad");
        }
        let z = self.z.as_ref().expect("backward before forward");
        self.embedding.backward(z, &dh, true, false);
    }
}

impl<F: Real> Module<F> for Generator<F> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        self.embedding.collect(&join(prefix, "embedding"), out);
        for (k, (lin, bn)) in self.hidden.iter().zip(&self.norms).enumerate() {
            lin.collect(&join(prefix, &format!("fc{}", k + 1)), out);
            bn.collect(&join(prefix, &format!("bn{}", k + 1)), out);
        }
        self.expand.collect(&join(prefix, &format!("fc{}", self.hidden.len() + 1)), out);
        for (k, l) in self.recurrent.iter().enumerate() {
            l.collect(&join(prefix, &format!("rnn{}", k + 1)), out);
        }
        self.project.collect(&join(prefix, "project"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        self.embedding.collect_mut(&join(prefix, "embedding"), out);
        let n = self.hidden.len();
        for (k, (lin, bn)) in self.hidden.iter_mut().zip(&mut self.norms).enumerate() {
            lin.collect_mut(&join(prefix, &format!("fc{}", k + 1)), out);
            bn.collect_mut(&join(prefix, &format!("bn{}", k + 1)), out);
        }
        self.expand.collect_mut(&join(prefix, &format!("fc{}", n + 1)), out);
        for (k, l) in self.recurrent.iter_mut().enumerate() {
            l.collect_mut(&join(prefix, &format!("rnn{}", k + 1)), out);
        }
        self.project.collect_mut(&join(prefix, "project"), out);
    }
}
