use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::Module;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4e-4,
            beta1: 0.8,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over the trainable parameters of one module. Moment
/// buffers are matched to parameters by position, so the module's parameter
/// order must stay fixed.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Array2<F>>,
    v: Vec<Array2<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new<M: Module<F>>(config: AdamConfig, module: &M) -> Self {
        let shapes: Vec<_> = module
            .params()
            .into_iter()
            .filter(|(_, p)| p.trainable)
            .map(|(_, p)| p.value.raw_dim())
            .collect();
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|s| Array2::zeros(*s)).collect(),
            v: shapes.iter().map(|s| Array2::zeros(*s)).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step<M: Module<F>>(&mut self, module: &mut M) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let lr = F::of(c.learning_rate * bc2.sqrt() / bc1);
        let eps = F::of(c.eps * bc2.sqrt());
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (one_b1, one_b2) = (F::one() - b1, F::one() - b2);
        let trainable = module.params_mut().into_iter().filter(|(_, p)| p.trainable);
        for (((_, p), m), v) in trainable.zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut p.value)
                .and(&mut p.grad)
                .and(m)
                .and(v)
                .for_each(|w, g, m, v| {
                    *m = b1 * *m + one_b1 * *g;
                    *v = b2 * *v + one_b2 * *g * *g;
                    *w -= lr * *m / (v.sqrt() + eps);
                    *g = F::zero();
                });
        }
        for (_, p) in module.params_mut() {
            if !p.trainable {
                p.zero_grad();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Linear, Param};
    use rand::SeedableRng;

    struct Quad(Param<f64>);

    impl Module<f64> for Quad {
        fn collect<'a>(&'a self, _: &str, out: &mut Vec<(String, &'a Param<f64>)>) {
            out.push(("x".into(), &self.0));
        }
        fn collect_mut<'a>(&'a mut self, _: &str, out: &mut Vec<(String, &'a mut Param<f64>)>) {
            out.push(("x".into(), &mut self.0));
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut q = Quad(Param::new(Array2::from_elem((1, 2), 1.0)));
        q.0.grad = Array2::from_shape_vec((1, 2), vec![3.0, -0.5]).unwrap();
        let mut opt = Adam::new(AdamConfig::default(), &q);
        opt.step(&mut q);
        assert!((q.0.value[[0, 0]] - (1.0 - 4e-4)).abs() < 1e-10);
        assert!((q.0.value[[0, 1]] - (1.0 + 4e-4)).abs() < 1e-10);
        assert!(q.0.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn minimizes_quadratic() {
        let mut q = Quad(Param::new(Array2::from_elem((1, 1), 5.0)));
        let mut opt = Adam::new(
            AdamConfig {
                learning_rate: 0.1,
                ..Default::default()
            },
            &q,
        );
        for _ in 0..500 {
            q.0.grad = q.0.value.mapv(|x| 2.0 * x);
            opt.step(&mut q);
        }
        assert!(q.0.value[[0, 0]].abs() < 1e-2);
    }

    #[test]
    fn tracks_only_trainable() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let lin: Linear<f32> = Linear::new(2, 3, &mut rng);
        let opt = Adam::new(AdamConfig::default(), &lin);
        assert_eq!(opt.m.len(), 2);
    }
}
