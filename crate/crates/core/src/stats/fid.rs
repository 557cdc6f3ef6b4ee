//! Fréchet distance between two sample sets summarized by mean and covariance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};

fn moments(x: &Array2<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = x.dim();
    let m = DMatrix::from_row_iterator(n, d, x.iter().copied());
    let mean = m.row_mean().transpose();
    let mut centered = m;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_x - mu_g|^2 + Tr(S_x + S_g - 2 (S_x S_g)^(1/2))` over rows as samples.
///
/// The trace of the cross term is taken from the eigenvalues of
/// `S_x^(1/2) S_g S_x^(1/2)`, which shares its spectrum with `S_x S_g`.
pub fn fid(samples_x: &Array2<f64>, samples_g: &Array2<f64>) -> Result<f64> {
    for s in [samples_x, samples_g] {
        if s.nrows() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: s.nrows(),
            });
        }
    }
    if samples_x.ncols() != samples_g.ncols() {
        return Err(Error::shape(&[samples_x.ncols()], &[samples_g.ncols()]));
    }
    let (mu_x, cov_x) = moments(samples_x);
    let (mu_g, cov_g) = moments(samples_g);
    if cov_x.iter().chain(cov_g.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance".into()));
    }
    let root_x = sym_sqrt(&cov_x);
    let inner = &root_x * &cov_g * &root_x;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    let value = (mu_x - mu_g).norm_squared() + cov_x.trace() + cov_g.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

/// One-dimensional form: `(mu_x - mu_g)^2 + (sigma_x - sigma_g)^2`.
pub fn fid_scalar(x: &[f64], g: &[f64]) -> Result<f64> {
    let col = |v: &[f64]| Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap();
    fid(&col(x), &col(g))
}
