use rand::Rng;
use rand_distr::StandardNormal;

use super::{accept, ChainState, Kernel, Rejection, StepOutcome};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, norm};
use crate::loss::GibbsTarget;

/// Metropolis-adjusted Langevin: `τ ~ N(ϑ - γ∇L_n(ϑ), σ² I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mala {
    pub gamma: f64,
    pub sigma: f64,
}

impl Mala {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("must be non-negative, got {gamma}"),
            ));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("must be positive, got {sigma}"),
            ));
        }
        Ok(Self { gamma, sigma })
    }
}

/// Isotropic Gaussian log-kernel without the normalizing constant, which
/// cancels between the forward and backward direction.
fn log_kernel(x: &[f64], mean_origin: &[f64], grad: &[f64], gamma: f64, sigma: f64) -> f64 {
    let sq: f64 = x
        .iter()
        .zip(mean_origin)
        .zip(grad)
        .map(|((xi, oi), gi)| (xi - (oi - gamma * gi)).powi(2))
        .sum();
    -sq / (2.0 * sigma * sigma)
}

/// `ln α(τ | ϑ)` with `α = 1 ∧ [e^{-λL(τ)+λL(ϑ)} 1_Ω(τ) q(ϑ|τ) / q(τ|ϑ)]`.
#[allow(clippy::too_many_arguments)]
pub fn mala_log_alpha(
    target: &GibbsTarget,
    theta: &[f64],
    loss: f64,
    grad: &[f64],
    tau: &[f64],
    tau_loss: f64,
    tau_grad: &[f64],
    gamma: f64,
    sigma: f64,
) -> Result<f64> {
    check_dim(target.dim(), theta.len())?;
    check_dim(target.dim(), tau.len())?;
    if !target.prior().contains(tau) || !tau_loss.is_finite() || !all_finite(tau_grad) {
        return Ok(f64::NEG_INFINITY);
    }
    if !target.prior().contains(theta) || !loss.is_finite() {
        return Ok(0.0);
    }
    let log_fwd = log_kernel(tau, theta, grad, gamma, sigma);
    let log_bwd = log_kernel(theta, tau, tau_grad, gamma, sigma);
    let r = -target.lambda() * (tau_loss - loss) + log_bwd - log_fwd;
    Ok(if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r.min(0.0)
    })
}

pub fn mala_step(
    state: &mut ChainState,
    target: &GibbsTarget,
    gamma: f64,
    sigma: f64,
    batch: Option<&[usize]>,
) -> Result<StepOutcome> {
    let (loss, grad) = state.current(target, batch)?;
    let tau: Vec<f64> = state
        .theta
        .iter()
        .zip(&grad)
        .map(|(t, g)| t - gamma * g + sigma * state.rng.sample::<f64, _>(StandardNormal))
        .collect();
    let uniform: f64 = state.rng.random();

    let inside = target.prior().contains(&tau);
    let (tau_loss, tau_grad) = if inside {
        crate::loss::evaluate(target.oracle(), &tau, batch)?
    } else {
        (f64::NAN, Vec::new())
    };
    let log_alpha = mala_log_alpha(
        target,
        &state.theta,
        loss,
        &grad,
        &tau,
        tau_loss,
        &tau_grad,
        gamma,
        sigma,
    )?;
    let rejection = if !inside {
        Some(Rejection::Boundary)
    } else if log_alpha == f64::NEG_INFINITY {
        Some(Rejection::NonFinite)
    } else {
        None
    };
    let accepted = accept(uniform, log_alpha);
    let u_norm = gamma * norm(&grad);

    state.step += 1;
    if accepted {
        state.theta = tau;
        state.cached_loss = tau_loss;
        state.cached_grad = tau_grad;
    } else if batch.is_some() {
        state.cached_loss = loss;
        state.cached_grad = grad;
    }
    Ok(StepOutcome {
        accepted,
        log_alpha,
        u_norm,
        rejection,
    })
}

impl Kernel for Mala {
    fn step(
        &self,
        target: &GibbsTarget,
        state: &mut ChainState,
        batch: Option<&[usize]>,
    ) -> Result<StepOutcome> {
        mala_step(state, target, self.gamma, self.sigma, batch)
    }
}
