//! Adversarial, linear-power and temporal-correlation losses, with the
//! gradients the trainer needs.
//!
//! Probability-form losses clamp their inputs to `[PROB_EPS, 1 - PROB_EPS]`.
//! Training uses the logit forms, which compute the same quantities without
//! the clamp and stay finite when the discriminator saturates.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::Bounds;
use crate::real::{sigmoid, softplus, Real};
use crate::stats::los_guard;

pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 10.0,
            lambda3: 5.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let w = Self {
            lambda1,
            lambda2,
            lambda3,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3];
        if all.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidConfig("loss weights must be finite and non-negative".into()));
        }
        if all.iter().all(|&l| l == 0.0) {
            return Err(Error::InvalidConfig("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// How the summed absolute TPCC differences are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TpccNormalization {
    /// Divide by the number of snapshots `M`.
    #[default]
    Snapshots,
    /// Divide by the number of pairs `M (M - 1) / 2`.
    Pairs,
}

fn clamp_prob<F: Real>(p: F) -> F {
    let eps = F::of(PROB_EPS);
    p.max(eps).min(F::one() - eps)
}

fn mean<F: Real>(v: impl Iterator<Item = F>, n: usize) -> F {
    v.sum::<F>() / F::of(n as f64)
}

fn nonempty(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(())
}

/// `-(mean log D(real) + mean log(1 - D(fake))) / 2`.
pub fn loss_discriminator<F: Real>(d_real: &[F], d_fake: &[F]) -> Result<F> {
    nonempty(d_real.len())?;
    nonempty(d_fake.len())?;
    let real = mean(d_real.iter().map(|&p| clamp_prob(p).ln()), d_real.len());
    let fake = mean(d_fake.iter().map(|&p| (F::one() - clamp_prob(p)).ln()), d_fake.len());
    Ok(-(real + fake) / F::of(2.0))
}

/// Gradients of [`loss_discriminator`] with respect to both inputs.
pub fn loss_discriminator_grad<F: Real>(d_real: &[F], d_fake: &[F]) -> Result<(Vec<F>, Vec<F>)> {
    nonempty(d_real.len())?;
    nonempty(d_fake.len())?;
    let eps = F::of(PROB_EPS);
    let inside = |p: F| p > eps && p < F::one() - eps;
    let (nr, nf) = (F::of(2.0 * d_real.len() as f64), F::of(2.0 * d_fake.len() as f64));
    let gr = d_real.iter().map(|&p| if inside(p) { -F::one() / (nr * p) } else { F::zero() }).collect();
    let gf = d_fake
        .iter()
        .map(|&p| if inside(p) { F::one() / (nf * (F::one() - p)) } else { F::zero() })
        .collect();
    Ok((gr, gf))
}

/// `-mean log D(G(z|y), y)`.
pub fn loss_generator_adv<F: Real>(d_fake: &[F]) -> Result<F> {
    nonempty(d_fake.len())?;
    Ok(-mean(d_fake.iter().map(|&p| clamp_prob(p).ln()), d_fake.len()))
}

pub fn loss_generator_adv_grad<F: Real>(d_fake: &[F]) -> Result<Vec<F>> {
    nonempty(d_fake.len())?;
    let eps = F::of(PROB_EPS);
    let n = F::of(d_fake.len() as f64);
    Ok(d_fake
        .iter()
        .map(|&p| if p > eps && p < F::one() - eps { -F::one() / (n * p) } else { F::zero() })
        .collect())
}

/// Discriminator loss from logits, with gradients on both logit sets.
pub fn loss_discriminator_logits<F: Real>(real: &[F], fake: &[F]) -> Result<(F, Vec<F>, Vec<F>)> {
    nonempty(real.len())?;
    nonempty(fake.len())?;
    let two = F::of(2.0);
    let (nr, nf) = (F::of(real.len() as f64), F::of(fake.len() as f64));
    let loss = (mean(real.iter().map(|&l| softplus(-l)), real.len()) + mean(fake.iter().map(|&l| softplus(l)), fake.len())) / two;
    let gr = real.iter().map(|&l| -sigmoid(-l) / (two * nr)).collect();
    let gf = fake.iter().map(|&l| sigmoid(l) / (two * nf)).collect();
    Ok((loss, gr, gf))
}

/// Generator adversarial loss from logits, with its gradient.
pub fn loss_generator_adv_logits<F: Real>(fake: &[F]) -> Result<(F, Vec<F>)> {
    nonempty(fake.len())?;
    let n = F::of(fake.len() as f64);
    let loss = mean(fake.iter().map(|&l| softplus(-l)), fake.len());
    Ok((loss, fake.iter().map(|&l| -sigmoid(-l) / n).collect()))
}

fn same_shape<F>(a: &ArrayView2<F>, b: &ArrayView2<F>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(&[a.nrows(), a.ncols()], &[b.nrows(), b.ncols()]));
    }
    Ok(())
}

fn range_of<F: Real>(p: &ArrayView2<F>) -> Result<F> {
    let (lo, hi) = p
        .iter()
        .fold((F::infinity(), F::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::Degenerate("reference power has zero range".into()));
    }
    Ok(hi - lo)
}

/// Squared difference of two linear power grids, scaled by the range of the
/// reference `p`, summed over all cells.
pub fn loss_linear<F: Real>(p: ArrayView2<F>, p_hat: ArrayView2<F>) -> Result<F> {
    same_shape(&p, &p_hat)?;
    let r = range_of(&p)?;
    let mut acc = F::zero();
    Zip::from(&p).and(&p_hat).for_each(|&a, &b| {
        let d = (a - b) / r;
        acc += d * d;
    });
    Ok(acc)
}

/// [`loss_linear`] and its gradient with respect to `p_hat`.
pub fn loss_linear_grad<F: Real>(p: ArrayView2<F>, p_hat: ArrayView2<F>) -> Result<(F, Array2<F>)> {
    same_shape(&p, &p_hat)?;
    let r = range_of(&p)?;
    let r2 = r * r;
    let mut acc = F::zero();
    let mut grad = Array2::zeros(p.raw_dim());
    Zip::from(&mut grad).and(&p).and(&p_hat).for_each(|g, &a, &b| {
        let d = b - a;
        acc += d * d / r2;
        *g = F::of(2.0) * d / r2;
    });
    Ok((acc, grad))
}

fn exclude_los<F: Real>(p: ArrayView2<F>, los_bin: Option<usize>) -> Array2<F> {
    let mut out = p.to_owned();
    if let Some(los) = los_bin {
        for b in los_guard(los, p.ncols()) {
            out.column_mut(b).fill(F::zero());
        }
    }
    out
}

/// TPCC between every pair of snapshots (rows) of a linear power grid,
/// after optionally zeroing the LOS bin and its neighbours.
pub fn tpcc_matrix<F: Real>(p: ArrayView2<F>, los_bin: Option<usize>) -> Result<Array2<F>> {
    let lin = exclude_los(p, los_bin);
    let gram = lin.dot(&lin.t());
    let m = gram.nrows();
    if let Some(t) = (0..m).find(|&t| gram[[t, t]] <= F::zero()) {
        return Err(Error::UndefinedCorrelation(format!("snapshot {t} has no power")));
    }
    Ok(Array2::from_shape_fn((m, m), |(i, j)| {
        if i == j {
            F::one()
        } else {
            gram[[i, j]] / gram[[i, i]].max(gram[[j, j]])
        }
    }))
}

fn tpcc_scale<F: Real>(m: usize, norm: TpccNormalization) -> F {
    match norm {
        TpccNormalization::Snapshots => F::of(m as f64),
        TpccNormalization::Pairs => F::of((m * (m - 1) / 2).max(1) as f64),
    }
}

/// Mean absolute TPCC discrepancy between a reference and a generated
/// channel, both as linear power. `los_bin` is the reference's LOS bin.
pub fn loss_tpcc<F: Real>(p: ArrayView2<F>, p_hat: ArrayView2<F>, los_bin: Option<usize>, norm: TpccNormalization) -> Result<F> {
    same_shape(&p, &p_hat)?;
    let target = tpcc_matrix(p, los_bin)?;
    Ok(loss_tpcc_grad(&target, p_hat, los_bin, norm)?.0)
}

/// TPCC loss against a precomputed reference matrix, with its gradient
/// with respect to `p_hat`.
pub fn loss_tpcc_grad<F: Real>(
    target: &Array2<F>,
    p_hat: ArrayView2<F>,
    los_bin: Option<usize>,
    norm: TpccNormalization,
) -> Result<(F, Array2<F>)> {
    let m = p_hat.nrows();
    if target.dim() != (m, m) {
        return Err(Error::shape(&[m, m], &[target.nrows(), target.ncols()]));
    }
    let lin = exclude_los(p_hat, los_bin);
    let gram = lin.dot(&lin.t());
    let energy: Vec<F> = (0..m).map(|t| gram[[t, t]]).collect();
    if let Some(t) = energy.iter().position(|&e| e <= F::zero()) {
        return Err(Error::UndefinedCorrelation(format!("generated snapshot {t} has no power")));
    }
    let scale = tpcc_scale::<F>(m, norm);
    let mut loss = F::zero();
    // d loss / d lin = A lin + diag(c) lin
    let mut a = Array2::<F>::zeros((m, m));
    let mut c = vec![F::zero(); m];
    for i in 0..m {
        for j in i + 1..m {
            let k = if energy[i] >= energy[j] { i } else { j };
            let e = energy[k];
            let rho = gram[[i, j]] / e;
            let diff = rho - target[[i, j]];
            loss += diff.abs();
            let s = if diff > F::zero() {
                F::one()
            } else if diff < F::zero() {
                -F::one()
            } else {
                F::zero()
            } / scale;
            a[[i, j]] += s / e;
            a[[j, i]] += s / e;
            c[k] -= F::of(2.0) * s * rho / e;
        }
    }
    let mut grad = a.dot(&lin);
    for (mut row, (&ck, lrow)) in grad.rows_mut().into_iter().zip(c.iter().zip(lin.rows())) {
        row.scaled_add(ck, &lrow);
    }
    if let Some(los) = los_bin {
        for b in los_guard(los, p_hat.ncols()) {
            grad.column_mut(b).fill(F::zero());
        }
    }
    Ok((loss / scale, grad))
}

pub fn loss_total<F: Real>(l_g: F, l_linear: F, l_tpcc: F, w: &LossWeights) -> F {
    F::of(w.lambda1) * l_g + F::of(w.lambda2) * l_linear + F::of(w.lambda3) * l_tpcc
}

/// Maps normalized network output `x` in `[-1, 1]` to linear power relative
/// to `p_max`: `10^((p_min + (x + 1) / 2 * span - p_max) / 10)`. The scale
/// cancels in both the linear and the TPCC loss.
pub fn relative_power<F: Real>(x: ArrayView2<F>, bounds: Bounds) -> Array2<F> {
    let k = F::of(std::f64::consts::LN_10 / 10.0);
    let half_span = F::of(bounds.span() / 2.0);
    x.mapv(|v| (k * (half_span * (v + F::one()) - F::of(bounds.span()))).exp())
}

/// `d relative_power / dx = relative_power * relative_power_slope`.
pub fn relative_power_slope(bounds: Bounds) -> f64 {
    std::f64::consts::LN_10 / 10.0 * bounds.span() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_half_gives_log_two() {
        let half = [0.5f64; 4];
        assert!((loss_discriminator(&half, &half).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((loss_generator_adv(&half).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_failing_discriminator() {
        assert!(loss_discriminator(&[1.0 - 1e-12], &[1e-12]).unwrap() < 1e-6);
        let worst = loss_discriminator(&[0.0f64], &[1.0]).unwrap();
        assert!((worst - (-(PROB_EPS.ln()))).abs() < 1e-6);
        assert!(loss_generator_adv(&[1.0f64]).unwrap() < 1e-6);
        assert!((loss_generator_adv(&[0.0f64]).unwrap() + PROB_EPS.ln()).abs() < 1e-9);
    }

    #[test]
    fn logit_forms_agree_with_probability_forms() {
        let lr = [0.3f64, -1.2, 2.0];
        let lf = [-0.4f64, 0.9];
        let pr: Vec<f64> = lr.iter().map(|&l| sigmoid(l)).collect();
        let pf: Vec<f64> = lf.iter().map(|&l| sigmoid(l)).collect();
        let (ld, gr, gf) = loss_discriminator_logits(&lr, &lf).unwrap();
        assert!((ld - loss_discriminator(&pr, &pf).unwrap()).abs() < 1e-12);
        let (pgr, pgf) = loss_discriminator_grad(&pr, &pf).unwrap();
        for k in 0..3 {
            assert!((gr[k] - pgr[k] * pr[k] * (1.0 - pr[k])).abs() < 1e-12);
        }
        for k in 0..2 {
            assert!((gf[k] - pgf[k] * pf[k] * (1.0 - pf[k])).abs() < 1e-12);
        }
        let (lg, gg) = loss_generator_adv_logits(&lf).unwrap();
        assert!((lg - loss_generator_adv(&pf).unwrap()).abs() < 1e-12);
        let pg = loss_generator_adv_grad(&pf).unwrap();
        assert!((gg[1] - pg[1] * pf[1] * (1.0 - pf[1])).abs() < 1e-12);
    }

    #[test]
    fn linear_hand_case() {
        let p = array![[0.0f64, 2.0]];
        let q = array![[1.0, 1.0]];
        assert!((loss_linear(p.view(), q.view()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(loss_linear(p.view(), p.view()).unwrap(), 0.0);
        let c = 7.5;
        let scaled = loss_linear((&p * c).view(), (&q * c).view()).unwrap();
        assert!((scaled - 0.5).abs() < 1e-12);
    }

    #[test]
    fn linear_rejects_flat_reference() {
        let p = array![[1.0, 1.0]];
        assert!(loss_linear(p.view(), p.view()).is_err());
    }

    #[test]
    fn tpcc_hand_case() {
        // rows correlate at 1/2 in q and fully in p
        let p = array![[1.0f64, 0.0], [1.0, 0.0]];
        let q = array![[1.0, 1.0], [1.0, 0.0]];
        let l = loss_tpcc(p.view(), q.view(), None, TpccNormalization::Snapshots).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        let l = loss_tpcc(p.view(), q.view(), None, TpccNormalization::Pairs).unwrap();
        assert!((l - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tpcc_matches_stats_kernel() {
        use crate::stats::tpcc_matrix_linear;
        let p = array![[1.0, 0.3, 0.2, 0.9], [0.1, 0.8, 0.5, 0.2], [0.4, 0.4, 0.7, 0.3]];
        let ours = tpcc_matrix(p.view(), None).unwrap();
        let theirs = tpcc_matrix_linear(&p).unwrap();
        for (a, b) in ours.iter().zip(theirs.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn total_is_weighted_sum() {
        let w = LossWeights::new(1.0, 1.0, 1.0).unwrap();
        assert!((loss_total(0.5, 0.2, 0.3, &w) - 1.0f64).abs() < 1e-15);
        let g = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(loss_total(0.5, 0.2, 0.3, &g), 0.5f64);
        let t = LossWeights::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(loss_total(0.5, 0.2, 0.3, &t), 0.3f64);
        assert!(LossWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn relative_power_endpoints() {
        let b = Bounds::new(-150.0, -60.0).unwrap();
        let p = relative_power(array![[1.0f64, -1.0]].view(), b);
        assert!((p[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((p[[0, 1]] - 1e-9).abs() < 1e-18);
    }
}
