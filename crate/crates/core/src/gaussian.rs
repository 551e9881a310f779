//! Multivariate normal helpers: factorization, marginals and conditionals.
//!
//! Covariances are allowed to be singular (perfectly correlated features);
//! conditioning uses a pseudo-inverse and factors drop null directions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PINV_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return m.clone();
    }
    let scale = m.amax().max(1.0);
    m.clone()
        .pseudo_inverse(PINV_EPS * scale)
        .expect("pseudo-inverse tolerance is nonnegative")
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::InvalidArgument(format!(
                "covariance is {}x{}, expected {d}x{d}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Checks symmetry and positive semi-definiteness.
    pub fn validate(&self) -> Result<()> {
        let scale = self.cov.amax().max(1e-300);
        if (&self.cov - self.cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let eig = self.cov.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
            return Err(Error::InvalidArgument(
                "covariance is not positive semi-definite".into(),
            ));
        }
        Ok(())
    }

    /// A `d x r` matrix `L` with `L L^T = cov`, keeping only the `r` directions
    /// with non-negligible variance.
    pub fn factor(&self) -> DMatrix<f64> {
        let d = self.dim();
        if d == 0 {
            return DMatrix::zeros(0, 0);
        }
        let eig = self.cov.clone().symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(0.0);
        let keep: Vec<usize> = (0..d)
            .filter(|&k| eig.eigenvalues[k] > 1e-13 * scale && eig.eigenvalues[k] > 0.0)
            .collect();
        DMatrix::from_fn(d, keep.len(), |i, c| {
            let k = keep[c];
            eig.eigenvectors[(i, k)] * eig.eigenvalues[k].sqrt()
        })
    }

    pub fn marginal(&self, idx: &[usize]) -> Gaussian {
        Gaussian {
            mean: DVector::from_fn(idx.len(), |i, _| self.mean[idx[i]]),
            cov: submatrix(&self.cov, idx, idx),
        }
    }

    /// Law of the `rest` coordinates given `given = values`.
    pub fn conditional(&self, rest: &[usize], given: &[usize], values: &[f64]) -> Gaussian {
        if given.is_empty() {
            return self.marginal(rest);
        }
        let s_rg = submatrix(&self.cov, rest, given);
        let s_gg_inv = pinv(&submatrix(&self.cov, given, given));
        let gain = &s_rg * &s_gg_inv;
        let delta = DVector::from_fn(given.len(), |i, _| values[i] - self.mean[given[i]]);
        let mean = DVector::from_fn(rest.len(), |i, _| self.mean[rest[i]]) + &gain * delta;
        let mut cov = submatrix(&self.cov, rest, rest) - &gain * s_rg.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        Gaussian { mean, cov }
    }

    /// Linear regression of `target` on `parents`: coefficients and residual variance.
    pub fn regression(&self, target: usize, parents: &[usize]) -> (DVector<f64>, f64) {
        if parents.is_empty() {
            return (DVector::zeros(0), self.cov[(target, target)]);
        }
        let s_pp_inv = pinv(&submatrix(&self.cov, parents, parents));
        let s_pt = submatrix(&self.cov, parents, &[target]);
        let coef = &s_pp_inv * &s_pt;
        let explained = (s_pt.transpose() * &coef)[(0, 0)];
        let resid = (self.cov[(target, target)] - explained).max(0.0);
        (coef.column(0).into_owned(), resid)
    }
}
