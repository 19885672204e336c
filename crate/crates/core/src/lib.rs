//! Metropolis-adjusted Adam (AdamMCMC) with prolate Gaussian proposals,
//! MALA and optimizer baselines, plus the verification instruments used
//! to check the sampler against analytically tractable targets.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod cli;
pub mod config;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod par;
pub mod prolate;
pub mod samplers;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
