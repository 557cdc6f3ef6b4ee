use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::{check_labels, ModelConfig, N_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{join, leaky_relu, leaky_relu_backward, Dropout, Embedding, Linear, Mode, Module, Param};
use crate::real::{sigmoid, Real};

#[derive(Debug, Clone)]
pub struct Discriminator<F> {
    pub embedding: Embedding<F>,
    pub hidden: Vec<Linear<F>>,
    pub out: Linear<F>,
    dropout: Vec<Dropout<F>>,
    slope: F,
    x: Option<Array2<F>>,
    activations: Vec<Array2<F>>,
}

impl<F: Real> Discriminator<F> {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, n_snapshots: usize, n_bins: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let n_in = n_snapshots * n_bins;
        if n_in == 0 {
            return Err(Error::InvalidConfig("input grid must be non-empty".into()));
        }
        let embedding = Embedding::new(N_CLASSES, n_in, rng);
        let mut width = n_in;
        let mut hidden = Vec::new();
        for &w in &cfg.discriminator_hidden {
            hidden.push(Linear::new(width, w, rng));
            width = w;
        }
        Ok(Self {
            embedding,
            dropout: hidden.iter().map(|_| Dropout::new(cfg.dropout)).collect(),
            hidden,
            out: Linear::new(width, 1, rng),
            slope: F::of(cfg.leaky_slope),
            x: None,
            activations: Vec::new(),
        })
    }

    pub fn input_len(&self) -> usize {
        self.embedding.dim()
    }

    /// Logits for flattened inputs `x: (B, T * D)`.
    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Array2<F>, labels: &[usize], mode: Mode, rng: &mut R) -> Result<Array1<F>> {
        check_labels(labels)?;
        if x.ncols() != self.input_len() || x.nrows() != labels.len() {
            return Err(Error::shape(&[labels.len(), self.input_len()], &[x.nrows(), x.ncols()]));
        }
        let mut h = self.embedding.forward(x.clone(), labels)?;
        self.activations.clear();
        for (lin, drop) in self.hidden.iter_mut().zip(&mut self.dropout) {
            h = lin.forward(h)?;
            leaky_relu(&mut h, self.slope);
            self.activations.push(h.clone());
            h = drop.forward(h, mode, rng);
        }
        let logits = self.out.forward(h)?.index_axis_move(Axis(1), 0);
        self.x = Some(x.clone());
        Ok(logits)
    }

    /// Probability that each input is real.
    pub fn probability<R: Rng + ?Sized>(&mut self, x: &Array2<F>, labels: &[usize], mode: Mode, rng: &mut R) -> Result<Array1<F>> {
        Ok(self.forward(x, labels, mode, rng)?.mapv(sigmoid))
    }

    /// Backpropagates gradients on the logits. With `param_grads` unset the
    /// parameters are left untouched, which is what the generator update needs.
    pub fn backward(&mut self, d_logits: &Array1<F>, param_grads: bool, input_grad: bool) -> Option<Array2<F>> {
        let d = d_logits.view().insert_axis(Axis(1)).to_owned();
        let mut dh = self.out.backward(&d, param_grads, true).expect("input grad");
        for k in (0..self.hidden.len()).rev() {
            self.dropout[k].backward(&mut dh);
            leaky_relu_backward(&mut dh, &self.activations[k], self.slope);
            dh = self.hidden[k].backward(&dh, param_grads, k > 0 || input_grad || param_grads)?;
        }
        let x = self.x.as_ref().expect("backward before forward");
        self.embedding.backward(x, &dh, param_grads, input_grad)
    }
}

impl<F: Real> Module<F> for Discriminator<F> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        self.embedding.collect(&join(prefix, "embedding"), out);
        for (k, lin) in self.hidden.iter().enumerate() {
            lin.collect(&join(prefix, &format!("fc{}", k + 1)), out);
        }
        self.out.collect(&join(prefix, "out"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        self.embedding.collect_mut(&join(prefix, "embedding"), out);
        for (k, lin) in self.hidden.iter_mut().enumerate() {
            lin.collect_mut(&join(prefix, &format!("fc{}", k + 1)), out);
        }
        self.out.collect_mut(&join(prefix, "out"), out);
    }
}
