use rand::Rng;

use super::{
    accept, adam_momentum_update_in_place, adam_update_vector, AdamParams, ChainState,
    CorrectionMode, CorrectionParams, Drift, Kernel, Momenta, ProposalParams, Rejection,
    StepOutcome,
};
use crate::error::{check_dim, Result};
use crate::linalg::{all_finite, norm};
use crate::loss::GibbsTarget;
use crate::prolate::ProlateCovariance;

/// A point of the chain together with its loss and gradient.
#[derive(Debug, Clone, Copy)]
pub struct Endpoint<'a> {
    pub theta: &'a [f64],
    pub loss: f64,
    pub grad: &'a [f64],
}

/// `ln C(ϑ, τ)`: momentum-density ratio between the two endpoints,
/// `Σ_l (|m_l - g_ϑ^l|² - |m_l - g_τ^l|²) / (2 s_l²)` with `g^1 = g`,
/// `g^2 = g ⊙ g` and `s_l² = ρ_l² / (1 - β_l²)`.
pub fn correction_log_c(
    m_next: &Momenta,
    grad_theta: &[f64],
    grad_tau: &[f64],
    cp: &CorrectionParams,
    ap: &AdamParams,
) -> Result<f64> {
    check_dim(m_next.dim(), grad_theta.len())?;
    check_dim(m_next.dim(), grad_tau.len())?;
    let [s1, s2] = cp.stationary_variances(ap);
    let mut first = 0.0;
    let mut second = 0.0;
    for i in 0..m_next.dim() {
        let (gt, gu) = (grad_theta[i], grad_tau[i]);
        first += (m_next.m1[i] - gt).powi(2) - (m_next.m1[i] - gu).powi(2);
        second += (m_next.m2[i] - gt * gt).powi(2) - (m_next.m2[i] - gu * gu).powi(2);
    }
    Ok(first / (2.0 * s1) + second / (2.0 * s2))
}

pub fn correction_term_c(
    m_next: &Momenta,
    grad_theta: &[f64],
    grad_tau: &[f64],
    cp: &CorrectionParams,
    ap: &AdamParams,
) -> Result<f64> {
    Ok(correction_log_c(m_next, grad_theta, grad_tau, cp, ap)?.exp())
}

/// Metropolis-adjusted Adam with a prolate proposal.
///
/// One step: advance the momenta with the gradient at `ϑ`, propose
/// `τ ~ N(ϑ - u, σ² I + σ∇² u uᵀ)`, then accept with
/// `α = 1 ∧ [p_λ(τ) φ_{τ-u,Σ}(ϑ) / (p_λ(ϑ) φ_{ϑ-u,Σ}(τ)) · C]`.
/// The momenta advance whether or not `τ` is accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamMcmc {
    pub adam: AdamParams,
    pub proposal: ProposalParams,
    pub correction: CorrectionParams,
    pub drift: Drift,
}

impl AdamMcmc {
    pub fn new(
        adam: AdamParams,
        proposal: ProposalParams,
        correction: CorrectionParams,
    ) -> Result<Self> {
        adam.validate()?;
        proposal.validate()?;
        correction.validate()?;
        Ok(Self {
            adam,
            proposal,
            correction,
            drift: Drift::Adam,
        })
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = drift;
        self
    }

    fn gradient_drift(&self, grad: &[f64]) -> Vec<f64> {
        grad.iter().map(|g| self.adam.gamma * g).collect()
    }

    /// Drift of a move leaving `origin` at chain step `k`.
    pub fn drift_vector(&self, m_next: &Momenta, k: u64, origin_grad: &[f64]) -> Vec<f64> {
        match self.drift {
            Drift::Adam => adam_update_vector(m_next, k, &self.adam),
            Drift::Gradient => self.gradient_drift(origin_grad),
        }
    }

    /// `ln α(to | from, m_next)` for chain step `k`.
    pub fn log_alpha(
        &self,
        target: &GibbsTarget,
        from: Endpoint<'_>,
        to: Endpoint<'_>,
        m_next: &Momenta,
        k: u64,
    ) -> Result<f64> {
        let u = self.drift_vector(m_next, k, from.grad);
        Ok(self.log_alpha_with(target, from, to, m_next, &u)?.0)
    }

    fn log_alpha_with(
        &self,
        target: &GibbsTarget,
        from: Endpoint<'_>,
        to: Endpoint<'_>,
        m_next: &Momenta,
        u: &[f64],
    ) -> Result<(f64, Option<Rejection>)> {
        check_dim(target.dim(), from.theta.len())?;
        check_dim(target.dim(), to.theta.len())?;
        if !target.prior().contains(to.theta) {
            return Ok((f64::NEG_INFINITY, Some(Rejection::Boundary)));
        }
        if !to.loss.is_finite() || !all_finite(to.grad) {
            return Ok((f64::NEG_INFINITY, Some(Rejection::NonFinite)));
        }
        if !target.prior().contains(from.theta) || !from.loss.is_finite() {
            return Ok((0.0, None));
        }

        let (sigma, sigma_dir) = (self.proposal.sigma, self.proposal.sigma_dir);
        // x - (origin - u)
        let offset = |x: &[f64], origin: &[f64], u: &[f64]| -> Vec<f64> {
            x.iter()
                .zip(origin)
                .zip(u)
                .map(|((x, o), d)| x - (o - d))
                .collect()
        };
        let forward = ProlateCovariance::new(sigma, sigma_dir, u)?;
        let q_fwd = forward.inv_quad_form(&offset(to.theta, from.theta, u))?;
        let log_q_ratio = match self.drift {
            // Same covariance both ways, so the normalizers cancel.
            Drift::Adam => {
                -0.5 * (forward.inv_quad_form(&offset(from.theta, to.theta, u))? - q_fwd)
            }
            Drift::Gradient => {
                let u_back = self.gradient_drift(to.grad);
                let backward = ProlateCovariance::new(sigma, sigma_dir, &u_back)?;
                let q_bwd = backward.inv_quad_form(&offset(from.theta, to.theta, &u_back))?;
                -0.5 * ((backward.log_det() + q_bwd) - (forward.log_det() + q_fwd))
            }
        };
        let log_c = match self.correction.mode {
            CorrectionMode::Unit => 0.0,
            CorrectionMode::Full => {
                correction_log_c(m_next, from.grad, to.grad, &self.correction, &self.adam)?
            }
        };

        let log_ratio = -target.lambda() * (to.loss - from.loss) + log_q_ratio + log_c;
        if log_ratio.is_nan() {
            return Ok((f64::NEG_INFINITY, Some(Rejection::NonFinite)));
        }
        Ok((log_ratio.min(0.0), None))
    }
}

impl Kernel for AdamMcmc {
    fn step(
        &self,
        target: &GibbsTarget,
        state: &mut ChainState,
        batch: Option<&[usize]>,
    ) -> Result<StepOutcome> {
        let (loss, grad) = state.take_current(target, batch)?;
        // The momenta advance whether or not the proposal is accepted.
        adam_momentum_update_in_place(&mut state.momenta, &grad, &self.adam)?;
        let u = self.drift_vector(&state.momenta, state.step, &grad);
        let mean: Vec<f64> = state.theta.iter().zip(&u).map(|(t, d)| t - d).collect();
        let cov = ProlateCovariance::new(self.proposal.sigma, self.proposal.sigma_dir, &u)?;
        let tau = cov.sample_around(mean, &mut state.rng)?;
        let uniform: f64 = state.rng.random();

        let (tau_loss, tau_grad) = if target.prior().contains(&tau) {
            crate::loss::evaluate(target.oracle(), &tau, batch)?
        } else {
            (f64::NAN, Vec::new())
        };
        let from = Endpoint {
            theta: &state.theta,
            loss,
            grad: &grad,
        };
        let to = Endpoint {
            theta: &tau,
            loss: tau_loss,
            grad: &tau_grad,
        };
        let (log_alpha, rejection) = self.log_alpha_with(target, from, to, &state.momenta, &u)?;
        let accepted = accept(uniform, log_alpha);

        state.step += 1;
        if accepted {
            state.theta = tau;
            state.cached_loss = tau_loss;
            state.cached_grad = tau_grad;
        } else {
            state.cached_loss = loss;
            state.cached_grad = grad;
        }
        Ok(StepOutcome {
            accepted,
            log_alpha,
            u_norm: norm(&u),
            rejection,
        })
    }
}
