//! Step functions: AdamMCMC, MALA and the optimizer baselines.
//!
//! Every step mutates a [`ChainState`] in place and reports a
//! [`StepOutcome`]. With `batch = Some(..)` the proposal gradient and both
//! loss evaluations of the Metropolis-Hastings test use that one minibatch.

mod adammcmc;
mod baselines;
mod mala;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::loss::GibbsTarget;

pub use adammcmc::{correction_log_c, correction_term_c, AdamMcmc, Endpoint};
pub use baselines::{adam_step, sgd_step, sghmc_step, Adam, Sgd, Sghmc};
pub use mala::{mala_log_alpha, mala_step, Mala};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            beta1: 0.99,
            beta2: 0.99,
            delta: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("must be positive, got {}", self.gamma),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::invalid(
                "beta1",
                format!("must lie in [0, 1), got {}", self.beta1),
            ));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid(
                "beta2",
                format!("must lie in [0, 1), got {}", self.beta2),
            ));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(
                "delta",
                format!("must be positive, got {}", self.delta),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalParams {
    pub sigma: f64,
    pub sigma_dir: f64,
}

impl ProposalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("must be positive, got {}", self.sigma),
            ));
        }
        if !(self.sigma_dir >= 0.0 && self.sigma_dir.is_finite()) {
            return Err(Error::invalid(
                "sigma_dir",
                format!("must be non-negative, got {}", self.sigma_dir),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionMode {
    /// `C ≡ 1`, the practical algorithm.
    Unit,
    /// Exact momentum-density correction.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionParams {
    pub mode: CorrectionMode,
    pub rho1: f64,
    pub rho2: f64,
}

impl CorrectionParams {
    pub const DEFAULT_S2: f64 = 1e-4;

    pub fn unit() -> Self {
        Self {
            mode: CorrectionMode::Unit,
            rho1: 0.0,
            rho2: 0.0,
        }
    }

    /// Full correction with `ρ_l² = (1 - β_l²) s²`, so the stationary
    /// momentum variance is `s²` for both moments.
    pub fn full_from_s2(s2: f64, adam: &AdamParams) -> Self {
        Self {
            mode: CorrectionMode::Full,
            rho1: ((1.0 - adam.beta1 * adam.beta1) * s2).sqrt(),
            rho2: ((1.0 - adam.beta2 * adam.beta2) * s2).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == CorrectionMode::Full {
            if !(self.rho1 > 0.0 && self.rho1.is_finite()) {
                return Err(Error::invalid(
                    "rho1",
                    "must be positive in full correction mode",
                ));
            }
            if !(self.rho2 > 0.0 && self.rho2.is_finite()) {
                return Err(Error::invalid(
                    "rho2",
                    "must be positive in full correction mode",
                ));
            }
        }
        Ok(())
    }

    /// `s_l² = ρ_l² / (1 - β_l²)`.
    pub fn stationary_variances(&self, adam: &AdamParams) -> [f64; 2] {
        [
            self.rho1 * self.rho1 / (1.0 - adam.beta1 * adam.beta1),
            self.rho2 * self.rho2 / (1.0 - adam.beta2 * adam.beta2),
        ]
    }
}

/// Drift used by AdamMCMC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Drift {
    /// `u_k(m^{(k+1)})`, shared by the forward and backward proposal.
    #[default]
    Adam,
    /// `γ ∇L_n` evaluated at the origin of each move. Memoryless, so the
    /// backward proposal re-evaluates the gradient at `τ`; with `σ∇ = 0`
    /// this is exactly MALA.
    Gradient,
}

/// First and second Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Momenta {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Momenta {
    pub fn zeros(dim: usize) -> Self {
        Self {
            m1: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.m1.len()
    }
}

/// In-place form of [`adam_momentum_update`].
pub fn adam_momentum_update_in_place(m: &mut Momenta, grad: &[f64], p: &AdamParams) -> Result<()> {
    check_dim(m.m1.len(), grad.len())?;
    check_dim(m.m2.len(), grad.len())?;
    for ((a, b), g) in m.m1.iter_mut().zip(m.m2.iter_mut()).zip(grad) {
        *a = p.beta1 * *a + (1.0 - p.beta1) * g;
        *b = p.beta2 * *b + (1.0 - p.beta2) * g * g;
    }
    Ok(())
}

/// `m₁' = β₁ m₁ + (1-β₁) g`, `m₂' = β₂ m₂ + (1-β₂) g²`.
pub fn adam_momentum_update(m: &Momenta, grad: &[f64], p: &AdamParams) -> Result<Momenta> {
    check_dim(m.m1.len(), grad.len())?;
    check_dim(m.m2.len(), grad.len())?;
    let m1 =
        m.m1.iter()
            .zip(grad)
            .map(|(a, g)| p.beta1 * a + (1.0 - p.beta1) * g)
            .collect();
    let m2 =
        m.m2.iter()
            .zip(grad)
            .map(|(a, g)| p.beta2 * a + (1.0 - p.beta2) * g * g)
            .collect();
    Ok(Momenta { m1, m2 })
}

/// Bias-corrected Adam step `u_k = γ m̂₁ / (sqrt(|m̂₂|) + δ)` for chain step `k`
/// (bias-correction exponent `k + 1`).
pub fn adam_update_vector(m: &Momenta, k: u64, p: &AdamParams) -> Vec<f64> {
    let exp = i32::try_from(k.saturating_add(1)).unwrap_or(i32::MAX);
    let c1 = 1.0 - p.beta1.powi(exp);
    let c2 = 1.0 - p.beta2.powi(exp);
    m.m1.iter()
        .zip(&m.m2)
        .map(|(a, b)| p.gamma * (a / c1) / ((b.abs() / c2).sqrt() + p.delta))
        .collect()
}

/// Chain position, Adam momenta and the loss/gradient cached at `theta`.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub momenta: Momenta,
    pub step: u64,
    pub cached_loss: f64,
    pub cached_grad: Vec<f64>,
    pub rng: ChaCha8Rng,
}

impl ChainState {
    /// Zero momenta, full-data loss and gradient at `theta`.
    pub fn new(target: &GibbsTarget, theta: Vec<f64>, seed: u64) -> Result<Self> {
        check_dim(target.dim(), theta.len())?;
        let (loss, grad) = target.oracle().eval_grad(&theta)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(
                "non-finite loss or gradient at initial point".into(),
            ));
        }
        let dim = theta.len();
        Ok(Self {
            theta,
            momenta: Momenta::zeros(dim),
            step: 0,
            cached_loss: loss,
            cached_grad: grad,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Like [`current`](Self::current) but moves the cached full-data
    /// gradient out instead of cloning it; the caller restores the cache.
    pub(crate) fn take_current(
        &mut self,
        target: &GibbsTarget,
        batch: Option<&[usize]>,
    ) -> Result<(f64, Vec<f64>)> {
        match batch {
            None => Ok((self.cached_loss, std::mem::take(&mut self.cached_grad))),
            Some(b) => target.oracle().eval_grad_batch(&self.theta, b),
        }
    }

    /// Loss and gradient at `theta` on the requested data.
    pub(crate) fn current(
        &self,
        target: &GibbsTarget,
        batch: Option<&[usize]>,
    ) -> Result<(f64, Vec<f64>)> {
        match batch {
            None => Ok((self.cached_loss, self.cached_grad.clone())),
            Some(b) => target.oracle().eval_grad_batch(&self.theta, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rejection {
    /// Proposal left the prior support `Ω`.
    Boundary,
    /// Loss or gradient at the proposal was not finite.
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    /// `ln α`, in `[-inf, 0]`. Zero for deterministic steps.
    pub log_alpha: f64,
    /// Norm of the drift vector of this step.
    pub u_norm: f64,
    pub rejection: Option<Rejection>,
}

impl StepOutcome {
    pub(crate) fn deterministic(u_norm: f64) -> Self {
        Self {
            accepted: true,
            log_alpha: 0.0,
            u_norm,
            rejection: None,
        }
    }
}

/// A Markov (or optimizer) transition on [`ChainState`].
pub trait Kernel: Send + Sync {
    fn step(
        &self,
        target: &GibbsTarget,
        state: &mut ChainState,
        batch: Option<&[usize]>,
    ) -> Result<StepOutcome>;
}

/// Every built-in kernel behind one type.
#[derive(Debug, Clone)]
pub enum Sampler {
    Mala(Mala),
    AdamMcmc(AdamMcmc),
    Adam(Adam),
    Sgd(Sgd),
    Sghmc(Sghmc),
}

impl Kernel for Sampler {
    fn step(
        &self,
        target: &GibbsTarget,
        state: &mut ChainState,
        batch: Option<&[usize]>,
    ) -> Result<StepOutcome> {
        match self {
            Sampler::Mala(k) => k.step(target, state, batch),
            Sampler::AdamMcmc(k) => k.step(target, state, batch),
            Sampler::Adam(k) => k.step(target, state, batch),
            Sampler::Sgd(k) => k.step(target, state, batch),
            Sampler::Sghmc(k) => k.step(target, state, batch),
        }
    }
}

/// Acceptance draw shared by the Metropolis kernels: `a ~ U[0,1)`, accept
/// iff `a < α`, so `α = 0` always rejects and `α = 1` always accepts.
pub(crate) fn accept(uniform: f64, log_alpha: f64) -> bool {
    uniform < log_alpha.exp()
}
