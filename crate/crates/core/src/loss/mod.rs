//! Loss oracles and the tempered Gibbs target built on top of them.

mod analytic;
pub mod data;
pub(crate) mod mlp;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{check_dim, Error, Result};

pub use analytic::{Banana, Quadratic};
pub use data::{ood_ring, two_moons, Dataset};
pub use mlp::MicroMlp;

/// Value and gradient access to an empirical loss `L_n`.
///
/// Minibatch estimates are unbiased for `L_n`: with batches `B_1..B_m`
/// partitioning the data, `Σ_j (|B_j|/n) · eval_batch(ϑ, B_j) = eval(ϑ)`.
pub trait LossOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of data points `n`. Analytic targets report a single point.
    fn n_points(&self) -> usize {
        1
    }

    fn eval(&self, theta: &[f64]) -> Result<f64>;

    fn eval_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_grad(theta)?.1)
    }

    fn eval_batch(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        check_batch(batch, self.n_points())?;
        self.eval(theta)
    }

    fn eval_grad_batch(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        check_batch(batch, self.n_points())?;
        self.eval_grad(theta)
    }
}

pub(crate) fn check_batch(batch: &[usize], n: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("batch", "empty batch"));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(
            "batch",
            format!("index {bad} out of range for {n} points"),
        ));
    }
    Ok(())
}

/// Loss and gradient over the full data (`None`) or a minibatch.
pub fn evaluate(
    oracle: &dyn LossOracle,
    theta: &[f64],
    batch: Option<&[usize]>,
) -> Result<(f64, Vec<f64>)> {
    match batch {
        None => oracle.eval_grad(theta),
        Some(b) => oracle.eval_grad_batch(theta, b),
    }
}

pub fn evaluate_loss(
    oracle: &dyn LossOracle,
    theta: &[f64],
    batch: Option<&[usize]>,
) -> Result<f64> {
    match batch {
        None => oracle.eval(theta),
        Some(b) => oracle.eval_batch(theta, b),
    }
}

/// Uniform prior support `Ω = [-R, R]^P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorBox {
    half_width: f64,
}

impl PriorBox {
    pub const DEFAULT_HALF_WIDTH: f64 = 100.0;

    pub fn new(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::invalid(
                "prior_half_width",
                format!("must be positive, got {half_width}"),
            ));
        }
        Ok(Self { half_width })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.iter().all(|x| x.abs() <= self.half_width)
    }
}

impl Default for PriorBox {
    fn default() -> Self {
        Self {
            half_width: Self::DEFAULT_HALF_WIDTH,
        }
    }
}

/// `p_λ(ϑ) ∝ exp(-λ L_n(ϑ)) 1_Ω(ϑ)`.
#[derive(Clone)]
pub struct GibbsTarget {
    oracle: Arc<dyn LossOracle>,
    lambda: f64,
    prior: PriorBox,
}

impl std::fmt::Debug for GibbsTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GibbsTarget")
            .field("dim", &self.oracle.dim())
            .field("lambda", &self.lambda)
            .field("prior", &self.prior)
            .finish()
    }
}

impl GibbsTarget {
    pub fn new(oracle: Arc<dyn LossOracle>, lambda: f64, prior: PriorBox) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(
                "lambda",
                format!("must be positive and finite, got {lambda}"),
            ));
        }
        Ok(Self {
            oracle,
            lambda,
            prior,
        })
    }

    pub fn oracle(&self) -> &dyn LossOracle {
        self.oracle.as_ref()
    }

    pub fn oracle_arc(&self) -> Arc<dyn LossOracle> {
        Arc::clone(&self.oracle)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn prior(&self) -> &PriorBox {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    /// Unnormalized `ln p_λ(ϑ)`: `-λ L_n(ϑ)` inside `Ω`, `-inf` outside.
    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        if !self.prior.contains(theta) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(-self.lambda * self.oracle.eval(theta)?)
    }
}

/// Gibbs target for `L_n(ϑ) = |ϑ|²/2`, i.e. `N(0, λ⁻¹ I)` truncated to `Ω`.
pub fn quadratic_target(dim: usize, lambda: f64, half_width: f64) -> Result<GibbsTarget> {
    GibbsTarget::new(
        Arc::new(Quadratic::new(dim)?),
        lambda,
        PriorBox::new(half_width)?,
    )
}

pub fn banana_target(dim: usize, lambda: f64, half_width: f64) -> Result<GibbsTarget> {
    GibbsTarget::new(
        Arc::new(Banana::new(dim)?),
        lambda,
        PriorBox::new(half_width)?,
    )
}

/// Shuffles `0..n` and cuts it into batches of `batch_size`; the last batch
/// may be short. Indices inside a batch are sorted so that a single batch
/// covering all points evaluates exactly like the full loss.
pub fn make_batches<R: Rng + ?Sized>(
    n: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::invalid(
            "batch_size",
            format!("must lie in 1..={n}, got {batch_size}"),
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    Ok(idx
        .chunks(batch_size)
        .map(|c| {
            let mut b = c.to_vec();
            b.sort_unstable();
            b
        })
        .collect())
}

/// Endless minibatch iterator that reshuffles at every epoch.
#[derive(Debug, Clone)]
pub struct BatchStream<R> {
    n: usize,
    batch_size: usize,
    rng: R,
    epoch: Vec<Vec<usize>>,
    cursor: usize,
}

impl<R: Rng> BatchStream<R> {
    pub fn new(n: usize, batch_size: usize, rng: R) -> Result<Self> {
        if batch_size == 0 || batch_size > n {
            return Err(Error::invalid(
                "batch_size",
                format!("must lie in 1..={n}, got {batch_size}"),
            ));
        }
        Ok(Self {
            n,
            batch_size,
            rng,
            epoch: Vec::new(),
            cursor: 0,
        })
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.cursor >= self.epoch.len() {
            self.epoch = make_batches(self.n, self.batch_size, &mut self.rng)
                .expect("batch size validated at construction");
            self.cursor = 0;
        }
        self.cursor += 1;
        &self.epoch[self.cursor - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batches_single_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = make_batches(10, 10, &mut rng).unwrap();
        assert_eq!(b, vec![(0..10).collect::<Vec<_>>()]);
    }

    #[test]
    fn batches_short_tail_disjoint_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = make_batches(10, 3, &mut rng).unwrap();
        let sizes: Vec<usize> = b.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn batch_size_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_batches(10, 0, &mut rng).is_err());
        assert!(make_batches(10, 11, &mut rng).is_err());
        assert!(BatchStream::new(5, 6, rng).is_err());
    }

    #[test]
    fn batch_stream_reshuffles_each_epoch() {
        let mut s = BatchStream::new(12, 4, ChaCha8Rng::seed_from_u64(5)).unwrap();
        let first: Vec<Vec<usize>> = (0..3).map(|_| s.next_batch().to_vec()).collect();
        let second: Vec<Vec<usize>> = (0..3).map(|_| s.next_batch().to_vec()).collect();
        for epoch in [&first, &second] {
            let mut all = epoch.concat();
            all.sort_unstable();
            assert_eq!(all, (0..12).collect::<Vec<_>>());
        }
        assert_ne!(first, second);
    }

    #[test]
    fn prior_box_membership() {
        let p = PriorBox::new(1.0).unwrap();
        assert!(p.contains(&[1.0, -1.0, 0.0]));
        assert!(!p.contains(&[1.0 + 1e-12, 0.0]));
        assert!(PriorBox::new(0.0).is_err());
        assert_eq!(PriorBox::default().half_width(), 100.0);
    }

    #[test]
    fn gibbs_log_density_outside_support() {
        let t = quadratic_target(2, 2.0, 1.0).unwrap();
        assert_eq!(t.log_density(&[0.5, 1.5]).unwrap(), f64::NEG_INFINITY);
        assert!((t.log_density(&[0.5, 0.5]).unwrap() + 0.5).abs() < 1e-15);
        assert!(GibbsTarget::new(t.oracle_arc(), 0.0, *t.prior()).is_err());
    }
}
