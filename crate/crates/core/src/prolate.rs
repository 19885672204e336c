//! Gaussian proposals with covariance `σ² I + σ∇² d dᵀ`.
//!
//! The covariance is never materialized. Determinant, inverse quadratic form
//! and sampling all run in `O(P)` using the rank-one structure: along the
//! unit direction `d̂` the variance is `σ² + σ∇² |d|²`, in every orthogonal
//! direction it is `σ²`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, norm_sq, softplus};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Implicit `Σ = σ² I + σ∇² d dᵀ`.
#[derive(Debug, Clone, Copy)]
pub struct ProlateCovariance<'a> {
    sigma: f64,
    sigma_dir: f64,
    direction: &'a [f64],
}

impl<'a> ProlateCovariance<'a> {
    pub fn new(sigma: f64, sigma_dir: f64, direction: &'a [f64]) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("must be positive and finite, got {sigma}"),
            ));
        }
        if !(sigma_dir >= 0.0 && sigma_dir.is_finite()) {
            return Err(Error::invalid(
                "sigma_dir",
                format!("must be non-negative and finite, got {sigma_dir}"),
            ));
        }
        if direction.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("direction", "contains non-finite entries"));
        }
        Ok(Self {
            sigma,
            sigma_dir,
            direction,
        })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sigma_dir(&self) -> f64 {
        self.sigma_dir
    }

    pub fn direction(&self) -> &[f64] {
        self.direction
    }

    fn is_isotropic(&self) -> bool {
        self.sigma_dir == 0.0 || self.direction.iter().all(|&x| x == 0.0)
    }

    /// `ln(σ∇² |d|² / σ²)`, finite whenever the direction is non-zero.
    fn log_ratio(&self) -> f64 {
        2.0 * (self.sigma_dir.ln() + norm(self.direction).ln() - self.sigma.ln())
    }

    /// Variance along the unit direction, `σ² + σ∇²|d|²`. May be `inf`.
    fn parallel_variance(&self) -> f64 {
        let s = self.sigma_dir * norm(self.direction);
        self.sigma * self.sigma + s * s
    }

    /// `ln det Σ = 2P ln σ + ln(1 + σ∇²|d|²/σ²)`.
    pub fn log_det(&self) -> f64 {
        let iso = 2.0 * self.dim() as f64 * self.sigma.ln();
        if self.is_isotropic() {
            iso
        } else {
            iso + softplus(self.log_ratio())
        }
    }

    /// `xᵀ Σ⁻¹ x`.
    ///
    /// Splits `x` into its component along `d̂` and the orthogonal remainder
    /// so that nearly parallel `x` does not lose precision to cancellation.
    pub fn inv_quad_form(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let inv_var = 1.0 / (self.sigma * self.sigma);
        if self.is_isotropic() {
            return Ok(norm_sq(x) * inv_var);
        }
        let d_norm = norm(self.direction);
        let proj = x
            .iter()
            .zip(self.direction)
            .map(|(xi, di)| xi * (di / d_norm))
            .sum::<f64>();
        let perp_sq = x
            .iter()
            .zip(self.direction)
            .map(|(xi, di)| (xi - proj * (di / d_norm)).powi(2))
            .sum::<f64>();
        Ok(perp_sq * inv_var + proj * proj / self.parallel_variance())
    }

    /// `Σ x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let s2 = self.sigma * self.sigma;
        let c = self.sigma_dir * self.sigma_dir * dot(self.direction, x);
        Ok(x.iter()
            .zip(self.direction)
            .map(|(xi, di)| s2 * xi + c * di)
            .collect())
    }

    /// `Σ⁻¹ x` via the Sherman-Morrison form
    /// `σ⁻² x − σ⁻² σ∇² ⟨d,x⟩ / (σ² + σ∇²|d|²) · d`.
    pub fn solve(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let inv_var = 1.0 / (self.sigma * self.sigma);
        if self.is_isotropic() {
            return Ok(x.iter().map(|xi| xi * inv_var).collect());
        }
        let c = self.sigma_dir * self.sigma_dir * dot(self.direction, x) / self.parallel_variance();
        Ok(x.iter()
            .zip(self.direction)
            .map(|(xi, di)| inv_var * (xi - c * di))
            .collect())
    }

    /// Gaussian log-density of `x` under `N(mean, Σ)`.
    pub fn log_density(&self, mean: &[f64], x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), mean.len())?;
        check_dim(self.dim(), x.len())?;
        let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        let q = self.inv_quad_form(&diff)?;
        Ok(-0.5 * (self.dim() as f64 * LN_2PI + self.log_det() + q))
    }

    /// Draws `mean + σ z + σ∇ ξ d`.
    ///
    /// Consumes `P` standard normals for `z`, then one more for `ξ` only when
    /// `σ∇ > 0`, so an isotropic proposal uses the same stream as MALA.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.sample_around(mean.to_vec(), rng)
    }

    /// [`sample`](Self::sample) reusing the buffer that holds the mean.
    pub fn sample_around<R: Rng + ?Sized>(
        &self,
        mut out: Vec<f64>,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        check_dim(self.dim(), out.len())?;
        for o in out.iter_mut() {
            *o += self.sigma * rng.sample::<f64, _>(StandardNormal);
        }
        if self.sigma_dir > 0.0 {
            let xi: f64 = rng.sample(StandardNormal);
            let scale = self.sigma_dir * xi;
            for (o, d) in out.iter_mut().zip(self.direction) {
                *o += scale * d;
            }
        }
        Ok(out)
    }
}
