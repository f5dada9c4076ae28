//! Gaussian kernel evaluation and Gram matrices, shared by the MMD
//! statistics, kernel logistic regression, and kernel ridge regression.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
}

/// `k(a, b) = exp(-||a - b||^2 / bandwidth_sq)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth_sq: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth_sq: f64) -> Self {
        assert!(
            bandwidth_sq > 0.0,
            "bandwidth_sq must be positive, got {bandwidth_sq}"
        );
        Self {
            family: KernelFamily::Gaussian,
            bandwidth_sq,
        }
    }

    /// Kernel value for two points of equal dimension.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "kernel arguments of lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        (-sq / self.bandwidth_sq).exp()
    }

    /// Gram matrix `G[i][j] = k(A_i, B_j)` over the rows of `a` and `b`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "gram blocks with {} and {} columns",
                a.ncols(),
                b.ncols()
            )));
        }
        let mut g = DMatrix::zeros(a.nrows(), b.nrows());
        for i in 0..a.nrows() {
            let ra: Vec<f64> = a.row(i).iter().copied().collect();
            for j in 0..b.nrows() {
                let rb: Vec<f64> = b.row(j).iter().copied().collect();
                g[(i, j)] = self.eval_unchecked(&ra, &rb);
            }
        }
        Ok(g)
    }
}
