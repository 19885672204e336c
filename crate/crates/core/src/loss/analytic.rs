use crate::error::{check_dim, Error, Result};

use super::LossOracle;

/// `L(ϑ) = |ϑ|² / 2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    dim: usize,
}

impl Quadratic {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        Ok(Self { dim })
    }
}

impl LossOracle for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim, theta.len())?;
        Ok(0.5 * theta.iter().map(|x| x * x).sum::<f64>())
    }

    fn eval_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.eval(theta)?, theta.to_vec()))
    }
}

/// Rosenbrock-shaped loss over consecutive coordinate pairs,
/// `L(ϑ) = Σ_i [(1 - ϑ_i)² + 100 (ϑ_{i+1} - ϑ_i²)²] / 20`.
///
/// Its Gibbs posterior is the usual curved "banana" density.
#[derive(Debug, Clone)]
pub struct Banana {
    dim: usize,
}

impl Banana {
    const CURVATURE: f64 = 100.0;
    const SCALE: f64 = 1.0 / 20.0;

    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid(
                "dim",
                "banana target needs at least 2 dimensions",
            ));
        }
        Ok(Self { dim })
    }
}

impl LossOracle for Banana {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim, theta.len())?;
        let sum: f64 = theta
            .windows(2)
            .map(|w| (1.0 - w[0]).powi(2) + Self::CURVATURE * (w[1] - w[0] * w[0]).powi(2))
            .sum();
        Ok(Self::SCALE * sum)
    }

    fn eval_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let value = self.eval(theta)?;
        let mut grad = vec![0.0; self.dim];
        for i in 0..self.dim - 1 {
            let (x, y) = (theta[i], theta[i + 1]);
            let r = y - x * x;
            grad[i] += Self::SCALE * (-2.0 * (1.0 - x) - 4.0 * Self::CURVATURE * x * r);
            grad[i + 1] += Self::SCALE * 2.0 * Self::CURVATURE * r;
        }
        Ok((value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_values() {
        let q = Quadratic::new(3).unwrap();
        assert_eq!(q.eval(&[1.0, 2.0, 2.0]).unwrap(), 4.5);
        assert_eq!(q.grad(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        assert!(q.eval(&[1.0]).is_err());
        assert!(Quadratic::new(0).is_err());
    }

    #[test]
    fn banana_minimum_at_ones() {
        let b = Banana::new(4).unwrap();
        let (v, g) = b.eval_grad(&[1.0; 4]).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        assert!(Banana::new(1).is_err());
    }

    #[test]
    fn batch_defaults_delegate_to_full() {
        let q = Quadratic::new(2).unwrap();
        assert_eq!(q.eval_batch(&[1.0, 1.0], &[0]).unwrap(), 1.0);
        assert!(q.eval_batch(&[1.0, 1.0], &[1]).is_err());
        assert!(q.eval_batch(&[1.0, 1.0], &[]).is_err());
    }
}
