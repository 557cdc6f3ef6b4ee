//! Conditional generator and discriminator networks.
//!
//! The generator maps `(z, y)` to a `T x D` grid in `(-1, 1)`: the latent is
//! scaled elementwise by a learned class embedding, expanded by three dense
//! layers to `T * D`, read as a length-`T` sequence of `D`-vectors, run
//! through stacked recurrent layers and projected per step with `tanh`.
//! The discriminator scales the flattened input by its own class embedding
//! and scores it with a dense stack.

mod discriminator;
mod generator;
mod gru;
mod lstm;
mod seq;

pub use discriminator::Discriminator;
pub use generator::Generator;
pub use gru::{gru_cell_backward, gru_cell_step, GruCellGrads, GruCellParams, GruLayer};
pub use lstm::{lstm_cell_backward, lstm_cell_step, LstmCellGrads, LstmCellParams, LstmLayer};

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Module, Param};
use crate::real::Real;

pub const N_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recurrence {
    #[default]
    Lstm,
    Gru,
}

impl std::str::FromStr for Recurrence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(Self::Lstm),
            "gru" => Ok(Self::Gru),
            other => Err(Error::InvalidConfig(format!("unknown recurrence '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    /// Widths of the batch-normalized generator layers before the `T * D`
    /// expansion.
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub recurrence: Recurrence,
    pub recurrent_layers: usize,
    pub leaky_slope: f64,
    pub dropout: f64,
    pub batchnorm_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 100,
            generator_hidden: vec![2048, 1000],
            discriminator_hidden: vec![2048, 1024, 512],
            recurrence: Recurrence::Lstm,
            recurrent_layers: 2,
            leaky_slope: 0.2,
            dropout: 0.4,
            batchnorm_momentum: 0.8,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive");
        }
        if self.generator_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        if self.recurrent_layers == 0 {
            return bad("need at least one recurrent layer");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.batchnorm_momentum) {
            return bad("batchnorm_momentum must lie in [0, 1)");
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope.is_finite()) {
            return bad("leaky_slope must be non-negative");
        }
        Ok(())
    }
}

/// A recurrent layer of either kind over `(T, B, F)` sequences.
#[derive(Debug, Clone)]
pub enum RecurrentLayer<F> {
    Lstm(LstmLayer<F>),
    Gru(GruLayer<F>),
}

impl<F: Real> RecurrentLayer<F> {
    pub fn new<R: Rng + ?Sized>(kind: Recurrence, input: usize, hidden: usize, rng: &mut R) -> Self {
        match kind {
            Recurrence::Lstm => Self::Lstm(LstmLayer::new(input, hidden, rng)),
            Recurrence::Gru => Self::Gru(GruLayer::new(input, hidden, rng)),
        }
    }

    pub fn forward(&mut self, x: &Array3<F>) -> Result<Array3<F>> {
        match self {
            Self::Lstm(l) => l.forward(x),
            Self::Gru(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, dy: &Array3<F>, param_grads: bool, input_grad: bool) -> Option<Array3<F>> {
        match self {
            Self::Lstm(l) => l.backward(dy, param_grads, input_grad),
            Self::Gru(l) => l.backward(dy, param_grads, input_grad),
        }
    }
}

impl<F: Real> Module<F> for RecurrentLayer<F> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<F>)>) {
        match self {
            Self::Lstm(l) => l.collect(prefix, out),
            Self::Gru(l) => l.collect(prefix, out),
        }
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<F>)>) {
        match self {
            Self::Lstm(l) => l.collect_mut(prefix, out),
            Self::Gru(l) => l.collect_mut(prefix, out),
        }
    }
}

pub(crate) fn check_labels(labels: &[usize]) -> Result<()> {
    match labels.iter().find(|&&l| l >= N_CLASSES) {
        Some(l) => Err(Error::InvalidLabel(format!("class index {l}"))),
        None => Ok(()),
    }
}
