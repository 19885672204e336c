//! Deterministic and stochastic-gradient baselines sharing the chain plumbing.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    adam_momentum_update, adam_update_vector, AdamParams, ChainState, Kernel, StepOutcome,
};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::loss::GibbsTarget;

fn refresh(state: &mut ChainState, target: &GibbsTarget, batch: Option<&[usize]>) -> Result<()> {
    let (loss, grad) = crate::loss::evaluate(target.oracle(), &state.theta, batch)?;
    state.cached_loss = loss;
    state.cached_grad = grad;
    Ok(())
}

/// Plain Adam: `ϑ' = ϑ - u_k(m')`.
pub fn adam_step(
    state: &mut ChainState,
    target: &GibbsTarget,
    p: &AdamParams,
    batch: Option<&[usize]>,
) -> Result<StepOutcome> {
    let (_, grad) = state.current(target, batch)?;
    let m_next = adam_momentum_update(&state.momenta, &grad, p)?;
    let u = adam_update_vector(&m_next, state.step, p);
    state.theta.iter_mut().zip(&u).for_each(|(t, d)| *t -= d);
    state.momenta = m_next;
    state.step += 1;
    refresh(state, target, batch)?;
    Ok(StepOutcome::deterministic(norm(&u)))
}

/// `ϑ' = ϑ - γ ∇L_n(ϑ)`.
pub fn sgd_step(
    state: &mut ChainState,
    target: &GibbsTarget,
    gamma: f64,
    batch: Option<&[usize]>,
) -> Result<StepOutcome> {
    let (_, grad) = state.current(target, batch)?;
    state
        .theta
        .iter_mut()
        .zip(&grad)
        .for_each(|(t, g)| *t -= gamma * g);
    state.step += 1;
    refresh(state, target, batch)?;
    Ok(StepOutcome::deterministic(gamma * norm(&grad)))
}

/// Stochastic-gradient HMC with friction, in the discretization
/// `v' = (1 - a) v - η λ∇L_n(ϑ) + N(0, 2 a η)`, `ϑ' = ϑ + v'`.
///
/// The velocity lives in `state.momenta.m1`; `m2` is unused.
pub fn sghmc_step(
    state: &mut ChainState,
    target: &GibbsTarget,
    p: &Sghmc,
    batch: Option<&[usize]>,
) -> Result<StepOutcome> {
    let (_, grad) = state.current(target, batch)?;
    let noise_std = (2.0 * p.friction * p.lr).sqrt();
    let lambda = target.lambda();
    for ((v, t), g) in state
        .momenta
        .m1
        .iter_mut()
        .zip(state.theta.iter_mut())
        .zip(&grad)
    {
        let xi: f64 = state.rng.sample(StandardNormal);
        *v = (1.0 - p.friction) * *v - p.lr * lambda * g + noise_std * xi;
        *t += *v;
    }
    state.step += 1;
    refresh(state, target, batch)?;
    Ok(StepOutcome::deterministic(norm(&state.momenta.m1)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam(pub AdamParams);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sghmc {
    /// Step size `η`.
    pub lr: f64,
    /// Friction `a` in `[0, 1]`.
    pub friction: f64,
}

impl Sghmc {
    pub fn new(lr: f64, friction: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("must be positive, got {lr}"),
            ));
        }
        if !(0.0..=1.0).contains(&friction) {
            return Err(Error::invalid(
                "friction",
                format!("must lie in [0, 1], got {friction}"),
            ));
        }
        Ok(Self { lr, friction })
    }
}

impl Kernel for Adam {
    fn step(
        &self,
        target: &GibbsTarget,
        state: &mut ChainState,
        batch: Option<&[usize]>,
    ) -> Result<StepOutcome> {
        adam_step(state, target, &self.0, batch)
    }
}

impl Kernel for Sgd {
    fn step(
        &self,
        target: &GibbsTarget,
        state: &mut ChainState,
        batch: Option<&[usize]>,
    ) -> Result<StepOutcome> {
        sgd_step(state, target, self.gamma, batch)
    }
}

impl Kernel for Sghmc {
    fn step(
        &self,
        target: &GibbsTarget,
        state: &mut ChainState,
        batch: Option<&[usize]>,
    ) -> Result<StepOutcome> {
        sghmc_step(state, target, self, batch)
    }
}
