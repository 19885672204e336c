//! Dense reference linear algebra for small `P`.
//!
//! Materializes covariance matrices and factors them with Cholesky. Used
//! only to cross-check the `O(P)` rank-one routines, never on a hot path.

use crate::error::{check_dim, Error, Result};

/// Row-major `P × P` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// `σ² I + σ∇² d dᵀ`.
    pub fn prolate(sigma: f64, sigma_dir: f64, d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = sigma_dir * sigma_dir * d[i] * d[j];
            }
            m.data[i * n + i] += sigma * sigma;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Lower-triangular `L` with `L Lᵀ = self`.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                if i == j {
                    let v = self.get(i, i) - s;
                    if !(v > 0.0) {
                        return Err(Error::Numerical("matrix is not positive definite".into()));
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = (self.get(i, j) - s) / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }
}

#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| self.l[i * self.n + i].ln())
            .sum::<f64>()
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, b.len())?;
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.l[i * n + k] * y[k]).sum();
            y[i] = (b[i] - s) / self.l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.l[k * n + i] * x[k]).sum();
            x[i] = (y[i] - s) / self.l[i * n + i];
        }
        Ok(x)
    }

    pub fn inv_quad_form(&self, x: &[f64]) -> Result<f64> {
        let s = self.solve(x)?;
        Ok(x.iter().zip(&s).map(|(a, b)| a * b).sum())
    }

    /// `ln N(x; mean, L Lᵀ)`.
    pub fn gaussian_log_pdf(&self, mean: &[f64], x: &[f64]) -> Result<f64> {
        check_dim(self.n, mean.len())?;
        let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        let q = self.inv_quad_form(&diff)?;
        Ok(-0.5 * (self.n as f64 * (2.0 * std::f64::consts::PI).ln() + self.log_det() + q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_of_known_matrix() {
        // [[4, 2], [2, 3]] has det 8
        let m = Matrix {
            n: 2,
            data: vec![4.0, 2.0, 2.0, 3.0],
        };
        let c = m.cholesky().unwrap();
        assert!((c.log_det() - 8f64.ln()).abs() < 1e-14);
        let x = c.solve(&[2.0, 1.0]).unwrap();
        let back = m.mul_vec(&x);
        assert!((back[0] - 2.0).abs() < 1e-14 && (back[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn indefinite_is_an_error() {
        let m = Matrix {
            n: 2,
            data: vec![1.0, 2.0, 2.0, 1.0],
        };
        assert!(m.cholesky().is_err());
    }
}
