//! Verification instruments: gridded target densities and TV distance,
//! the pointwise detailed-balance checker, moment comparisons, and the
//! hyperparameter scan and full-versus-stochastic Metropolis-Hastings
//! runners.

mod scan;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dense::Matrix;
use crate::error::{check_dim, Error, Result};
use crate::loss::GibbsTarget;
use crate::par;
use crate::samplers::{adam_update_vector, AdamMcmc, ChainState, Endpoint, Kernel, Momenta};
use crate::stats;

pub use scan::{
    compare_full_vs_stochastic_mh, ensemble_accuracy, scan_acceptance, write_scan_csv, ChainStats,
    MhComparison, ScanParam, ScanRow,
};

/// Regular grid over a 1-D or 2-D box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let d = lo.len();
        if !(1..=2).contains(&d) || hi.len() != d || resolution.len() != d {
            return Err(Error::GridMismatch(
                "grids support 1 or 2 dimensions".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || resolution.contains(&0) {
            return Err(Error::GridMismatch("empty grid".into()));
        }
        Ok(Self { lo, hi, resolution })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn n_cells(&self) -> usize {
        self.resolution.iter().product()
    }

    fn width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.resolution[axis] as f64
    }

    /// Cell containing `x`, or `None` outside the grid.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for (a, (&xa, &lo)) in x.iter().zip(&self.lo).enumerate() {
            let t = (xa - lo) / self.width(a);
            if !(t >= 0.0) || t >= self.resolution[a] as f64 {
                return None;
            }
            idx = idx * self.resolution[a] + t as usize;
        }
        Some(idx)
    }

    /// Points at the centres of an `oversample^d` sub-grid of cell `cell`.
    fn sub_points(&self, cell: usize, oversample: usize) -> Vec<Vec<f64>> {
        let mut coords = vec![0usize; self.dim()];
        let mut rem = cell;
        for a in (0..self.dim()).rev() {
            coords[a] = rem % self.resolution[a];
            rem /= self.resolution[a];
        }
        let axis_points = |a: usize| -> Vec<f64> {
            let w = self.width(a);
            let start = self.lo[a] + coords[a] as f64 * w;
            (0..oversample)
                .map(|s| start + (s as f64 + 0.5) * w / oversample as f64)
                .collect()
        };
        match self.dim() {
            1 => axis_points(0).into_iter().map(|x| vec![x]).collect(),
            _ => {
                let (xs, ys) = (axis_points(0), axis_points(1));
                xs.iter()
                    .flat_map(|&x| ys.iter().map(move |&y| vec![x, y]))
                    .collect()
            }
        }
    }
}

/// Normalized cell probabilities of a density on a [`GridSpec`].
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub spec: GridSpec,
    log_mass: Vec<f64>,
}

impl GridDensity {
    /// Integrates `exp(log_density)` over each cell with a midpoint rule on an
    /// `oversample`-fold sub-grid and normalizes with log-sum-exp.
    pub fn from_log_density(
        spec: GridSpec,
        oversample: usize,
        log_density: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let oversample = oversample.max(1);
        let raw: Vec<f64> = (0..spec.n_cells())
            .map(|c| {
                let vals: Vec<f64> = spec
                    .sub_points(c, oversample)
                    .iter()
                    .map(|p| log_density(p))
                    .collect();
                crate::linalg::log_sum_exp(&vals)
            })
            .collect();
        let total = crate::linalg::log_sum_exp(&raw);
        if !total.is_finite() {
            return Err(Error::Numerical("density has no mass on the grid".into()));
        }
        Ok(Self {
            log_mass: raw.iter().map(|v| v - total).collect(),
            spec,
        })
    }

    pub fn from_target(target: &GibbsTarget, spec: GridSpec, oversample: usize) -> Result<Self> {
        check_dim(spec.dim(), target.dim())?;
        Self::from_log_density(spec, oversample, |x| {
            target.log_density(x).unwrap_or(f64::NEG_INFINITY)
        })
    }

    pub fn masses(&self) -> Vec<f64> {
        self.log_mass.iter().map(|v| v.exp()).collect()
    }
}

/// Sample counts per grid cell plus the number that fell outside.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub spec: GridSpec,
    pub counts: Vec<u64>,
    pub outside: u64,
}

impl Histogram {
    pub fn from_samples<'a>(spec: GridSpec, samples: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut counts = vec![0; spec.n_cells()];
        let mut outside = 0;
        for s in samples {
            match spec.cell_of(s) {
                Some(c) => counts[c] += 1,
                None => outside += 1,
            }
        }
        Self {
            spec,
            counts,
            outside,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }
}

pub const MIN_TV_SAMPLES: u64 = 1_000;

/// `½ Σ_cells |empirical - target|`, with mass that fell outside the grid
/// counted as disagreement.
pub fn tv_distance(empirical: &Histogram, target: &GridDensity) -> Result<f64> {
    if empirical.spec != target.spec {
        return Err(Error::GridMismatch(
            "histogram and target use different grids".into(),
        ));
    }
    let n = empirical.total();
    if n < MIN_TV_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_TV_SAMPLES as usize,
            actual: n as usize,
        });
    }
    let nf = n as f64;
    let inside: f64 = empirical
        .counts
        .iter()
        .zip(target.masses())
        .map(|(&c, p)| (c as f64 / nf - p).abs())
        .sum();
    Ok((0.5 * (inside + empirical.outside as f64 / nf)).min(1.0))
}

/// Expected TV distance of `n` i.i.d. draws from `target` to `target`,
/// `½ Σ sqrt(2 p (1 - p) / (π n))` (normal approximation per cell).
pub fn tv_noise_floor(target: &GridDensity, n: u64) -> f64 {
    let nf = n as f64;
    0.5 * target
        .masses()
        .iter()
        .map(|p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * nf)).sqrt())
        .sum::<f64>()
}

/// TV distance between the law of `ϑ^{(k)}` across independent chains and the
/// gridded target, at each checkpoint `k`.
pub fn tv_trace<K: Kernel + ?Sized>(
    kernel: &K,
    target: &GibbsTarget,
    states: Vec<ChainState>,
    checkpoints: &[u64],
    grid: &GridDensity,
) -> Result<Vec<(u64, f64)>> {
    let mut sorted = checkpoints.to_vec();
    sorted.sort_unstable();
    let last = *sorted
        .last()
        .ok_or_else(|| Error::invalid("checkpoints", "empty"))?;
    let snapshots: Vec<Result<Vec<Vec<f64>>>> = par::map_vec(states, |mut s| {
        let mut out = Vec::with_capacity(sorted.len());
        let mut next = 0;
        for k in 1..=last {
            kernel.step(target, &mut s, None)?;
            while next < sorted.len() && sorted[next] == k {
                out.push(s.theta.clone());
                next += 1;
            }
        }
        Ok(out)
    });
    let snapshots: Vec<Vec<Vec<f64>>> = snapshots.into_iter().collect::<Result<_>>()?;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let hist = Histogram::from_samples(
                grid.spec.clone(),
                snapshots.iter().map(|s| s[i].as_slice()),
            );
            Ok((k, tv_distance(&hist, grid)?))
        })
        .collect()
}

/// Variance of `N(0, λ⁻¹)` truncated to `[-R, R]`, by composite Simpson
/// quadrature.
pub fn truncated_gaussian_variance(lambda: f64, half_width: f64) -> f64 {
    let r = half_width.min(40.0 / lambda.sqrt());
    let n = 20_000;
    let h = 2.0 * r / n as f64;
    let (mut z, mut m2) = (0.0, 0.0);
    for i in 0..=n {
        let x = -r + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f = (-0.5 * lambda * x * x).exp();
        z += w * f;
        m2 += w * f * x * x;
    }
    m2 / z
}

/// Sample mean and variance of one coordinate with batch-means standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

pub fn coordinate_moments(series: &[f64], n_batches: usize) -> MomentEstimate {
    let mean = stats::mean(series);
    let sq: Vec<f64> = series.iter().map(|x| (x - mean).powi(2)).collect();
    MomentEstimate {
        mean,
        mean_se: stats::batch_means_se(series, n_batches),
        variance: stats::mean(&sq),
        variance_se: stats::batch_means_se(&sq, n_batches),
    }
}

/// One random configuration `(ϑ, τ, m̃, k)` for the detailed-balance check.
#[derive(Debug, Clone)]
pub struct BalanceTrial {
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    pub momenta: Momenta,
    pub step: u64,
}

/// Random trials around a target: `ϑ, τ ~ N(0, I)`, momenta near the
/// average of the endpoint gradients so that the correction stays moderate.
pub fn random_balance_trials<R: Rng + ?Sized>(
    target: &GibbsTarget,
    n: usize,
    rng: &mut R,
) -> Result<Vec<BalanceTrial>> {
    let dim = target.dim();
    let mut normal = |scale: f64| -> Vec<f64> {
        (0..dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let mut trials = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = normal(1.0);
        let tau = normal(1.0);
        let m1_noise = normal(0.1);
        let m2_noise = normal(0.1);
        let g_theta = target.oracle().grad(&theta)?;
        let g_tau = target.oracle().grad(&tau)?;
        let m1 = (0..dim)
            .map(|i| 0.5 * (g_theta[i] + g_tau[i]) + m1_noise[i])
            .collect();
        let m2 = (0..dim)
            .map(|i| 0.5 * (g_theta[i].powi(2) + g_tau[i].powi(2)) + m2_noise[i].abs())
            .collect();
        trials.push(BalanceTrial {
            theta,
            tau,
            momenta: Momenta { m1, m2 },
            step: 0,
        });
    }
    for (i, t) in trials.iter_mut().enumerate() {
        t.step = (i % 50) as u64;
    }
    Ok(trials)
}

/// `ln f(ϑ, m) = -λ L(ϑ) + ln φ_{∇L(ϑ), s₁²}(m₁) + ln φ_{∇L(ϑ)², s₂²}(m₂)`,
/// up to the constant normalizer of the Gibbs density.
fn log_invariant_density(
    target: &GibbsTarget,
    theta: &[f64],
    m: &Momenta,
    s2: [f64; 2],
) -> Result<f64> {
    let log_p = target.log_density(theta)?;
    if log_p == f64::NEG_INFINITY {
        return Ok(log_p);
    }
    let g = target.oracle().grad(theta)?;
    let iso = |x: &[f64], mean: &[f64], var: f64| -> f64 {
        let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
        -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI * var).ln() + sq / var)
    };
    let g2: Vec<f64> = g.iter().map(|v| v * v).collect();
    Ok(log_p + iso(&m.m1, &g, s2[0]) + iso(&m.m2, &g2, s2[1]))
}

/// Signature of an acceptance rule `ln α(to | from, m̃, k)`.
pub type LogAlphaFn<'a> = dyn Fn(&GibbsTarget, &AdamMcmc, Endpoint<'_>, Endpoint<'_>, &Momenta, u64) -> Result<f64>
    + Sync
    + 'a;

/// Relative gap `|α(τ|ϑ) q₁(τ|ϑ) f(ϑ) / (α(ϑ|τ) q₁(ϑ|τ) f(τ)) - 1|` for each
/// trial. The proposal density `q₁` is evaluated through a dense Cholesky
/// factorization of the materialized covariance and `f` by its direct
/// formula, both independent of the sampler's rank-one code path.
pub fn detailed_balance_violations(
    target: &GibbsTarget,
    sampler: &AdamMcmc,
    stationary_var: [f64; 2],
    trials: &[BalanceTrial],
    log_alpha: &LogAlphaFn<'_>,
) -> Result<Vec<f64>> {
    trials
        .iter()
        .map(|t| {
            let u = adam_update_vector(&t.momenta, t.step, &sampler.adam);
            let chol = Matrix::prolate(sampler.proposal.sigma, sampler.proposal.sigma_dir, &u)
                .cholesky()?;
            let shifted =
                |x: &[f64]| -> Vec<f64> { x.iter().zip(&u).map(|(a, b)| a - b).collect() };
            let q_fwd = chol.gaussian_log_pdf(&shifted(&t.theta), &t.tau)?;
            let q_bwd = chol.gaussian_log_pdf(&shifted(&t.tau), &t.theta)?;
            let f_theta = log_invariant_density(target, &t.theta, &t.momenta, stationary_var)?;
            let f_tau = log_invariant_density(target, &t.tau, &t.momenta, stationary_var)?;

            let (l_theta, g_theta) = target.oracle().eval_grad(&t.theta)?;
            let (l_tau, g_tau) = target.oracle().eval_grad(&t.tau)?;
            let e_theta = Endpoint {
                theta: &t.theta,
                loss: l_theta,
                grad: &g_theta,
            };
            let e_tau = Endpoint {
                theta: &t.tau,
                loss: l_tau,
                grad: &g_tau,
            };
            let a_fwd = log_alpha(target, sampler, e_theta, e_tau, &t.momenta, t.step)?;
            let a_bwd = log_alpha(target, sampler, e_tau, e_theta, &t.momenta, t.step)?;

            let lhs = a_fwd + q_fwd + f_theta;
            let rhs = a_bwd + q_bwd + f_tau;
            Ok(if lhs == f64::NEG_INFINITY && rhs == f64::NEG_INFINITY {
                0.0
            } else {
                (lhs - rhs).exp_m1().abs()
            })
        })
        .collect()
}

/// Maximum relative detailed-balance violation of `sampler` over `n_trials`
/// random trials, with the invariant density built from the sampler's own
/// `ρ_l` when it runs the full correction.
pub fn check_detailed_balance<R: Rng + ?Sized>(
    target: &GibbsTarget,
    sampler: &AdamMcmc,
    stationary_var: [f64; 2],
    n_trials: usize,
    rng: &mut R,
) -> Result<f64> {
    let trials = random_balance_trials(target, n_trials, rng)?;
    let v = detailed_balance_violations(
        target,
        sampler,
        stationary_var,
        &trials,
        &|t, s, a, b, m, k| s.log_alpha(t, a, b, m, k),
    )?;
    Ok(v.into_iter().fold(0.0, f64::max))
}
