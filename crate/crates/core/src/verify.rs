//! The numbered release checks, shared by `adammcmc verify` and the
//! `acceptance` test target.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::chain::{ensemble_predict, run_chain, ChainSchedule, RunOptions};
use crate::config::{ood_inputs, Experiment, RunConfig, TargetKind};
use crate::dense::Matrix;
use crate::diagnostics::{
    compare_full_vs_stochastic_mh, coordinate_moments, detailed_balance_violations,
    random_balance_trials, scan_acceptance, truncated_gaussian_variance, tv_noise_floor, tv_trace,
    ChainStats, GridDensity, GridSpec, ScanParam, ScanRow,
};
use crate::error::Result;
use crate::linalg::dot;
use crate::loss::quadratic_target;
use crate::prolate::ProlateCovariance;
use crate::samplers::{
    AdamMcmc, AdamParams, ChainState, CorrectionParams, Drift, Kernel, Mala, ProposalParams,
};
use crate::stats;

/// Outcome of one numbered check.
#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {:<28} {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

pub const ALL: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
/// Checks that finish in well under a minute.
pub const QUICK: [u8; 5] = [1, 2, 3, 6, 10];

fn lookup(id: u8) -> Option<(&'static str, Check)> {
    Some(match id {
        1 => ("rank-one linear algebra", rank_one_linalg as Check),
        2 => ("proposal sampling", proposal_sampling),
        3 => ("detailed balance", detailed_balance),
        4 => ("posterior moments", posterior_moments),
        5 => ("tv convergence", tv_convergence),
        6 => ("mala equivalence", mala_equivalence),
        7 => ("acceptance trends", acceptance_trends),
        8 => ("posterior spread", posterior_spread),
        9 => ("stochastic vs full m-h", stochastic_vs_full),
        10 => ("determinism", determinism),
        _ => return None,
    })
}

/// Runs one check; errors count as failures.
pub fn run_criterion(id: u8) -> Option<CriterionReport> {
    let (name, check) = lookup(id)?;
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CriterionReport {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn normals<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Criterion 1: `log_det` and `inv_quad_form` against a dense Cholesky on
/// 500 random instances with `P ≤ 64`.
pub fn rank_one_linalg() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_det, mut worst_quad) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let p = rng.random_range(1..=64);
        let sigma = rng.random_range(0.1..5.0);
        let sigma_dir = rng.random_range(0.0..10.0);
        let d = normals(p, &mut rng);
        let x = normals(p, &mut rng);
        let cov = ProlateCovariance::new(sigma, sigma_dir, &d)?;
        let chol = Matrix::prolate(sigma, sigma_dir, &d).cholesky()?;
        // exp(a) / exp(b) - 1
        worst_det = worst_det.max((cov.log_det() - chol.log_det()).exp_m1().abs());
        worst_quad = worst_quad.max(rel_err(cov.inv_quad_form(&x)?, chol.inv_quad_form(&x)?));
    }
    Ok((
        worst_det < 1e-10 && worst_quad < 1e-8,
        format!("max rel err det {worst_det:.2e} (< 1e-10), quad {worst_quad:.2e} (< 1e-8)"),
    ))
}

/// Criterion 2: covariance of 10⁵ proposal draws with `P = 8`, and the
/// variance along the drift direction.
pub fn proposal_sampling() -> Result<(bool, String)> {
    const N: usize = 100_000;
    const P: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let d = normals(P, &mut rng);
    let (sigma, sigma_dir) = (0.7, 1.3);
    let cov = ProlateCovariance::new(sigma, sigma_dir, &d)?;
    let dense = Matrix::prolate(sigma, sigma_dir, &d);
    let mean = vec![0.0; P];
    let draws: Vec<Vec<f64>> = (0..N)
        .map(|_| cov.sample(&mean, &mut rng))
        .collect::<Result<_>>()?;

    let nf = N as f64;
    let emp_mean: Vec<f64> = (0..P)
        .map(|i| draws.iter().map(|x| x[i]).sum::<f64>() / nf)
        .collect();
    let mut worst_z = 0.0f64;
    for i in 0..P {
        worst_z = worst_z.max(emp_mean[i].abs() / (dense.get(i, i) / nf).sqrt());
        for j in 0..=i {
            let c = draws
                .iter()
                .map(|x| (x[i] - emp_mean[i]) * (x[j] - emp_mean[j]))
                .sum::<f64>()
                / (nf - 1.0);
            let se = ((dense.get(i, i) * dense.get(j, j) + dense.get(i, j).powi(2)) / nf).sqrt();
            worst_z = worst_z.max((c - dense.get(i, j)).abs() / se);
        }
    }
    let proj: Vec<f64> = draws.iter().map(|x| dot(x, &d)).collect();
    let d2 = dot(&d, &d);
    let truth = sigma * sigma * d2 + sigma_dir * sigma_dir * d2 * d2;
    let dir_z = (stats::variance(&proj) - truth).abs() / (truth * (2.0 / (nf - 1.0)).sqrt());
    Ok((
        worst_z < 4.0 && dir_z < 3.0,
        format!("worst entry {worst_z:.2} SE (< 4), direction variance {dir_z:.2} SE (< 3)"),
    ))
}

fn balance_sampler(correction: CorrectionParams, adam: AdamParams) -> Result<AdamMcmc> {
    AdamMcmc::new(
        adam,
        ProposalParams {
            sigma: 0.5,
            sigma_dir: 3.0,
        },
        correction,
    )
}

/// Criterion 3: pointwise detailed balance of the full correction on the 2-D
/// quadratic target, with the unit correction reported for comparison.
pub fn detailed_balance() -> Result<(bool, String)> {
    let target = quadratic_target(2, 1.0, 10.0)?;
    let adam = AdamParams {
        gamma: 0.1,
        beta1: 0.9,
        beta2: 0.95,
        delta: 1e-8,
    };
    let full = CorrectionParams::full_from_s2(1e-2, &adam);
    let var = full.stationary_variances(&adam);
    let trials = random_balance_trials(&target, 200, &mut ChaCha8Rng::seed_from_u64(13))?;
    let violations = |s: &AdamMcmc| -> Result<f64> {
        let v = detailed_balance_violations(&target, s, var, &trials, &|t, s, a, b, m, k| {
            s.log_alpha(t, a, b, m, k)
        })?;
        Ok(v.into_iter().fold(0.0, f64::max))
    };
    let v_full = violations(&balance_sampler(full, adam)?)?;
    let v_unit = violations(&balance_sampler(CorrectionParams::unit(), adam)?)?;
    Ok((
        v_full < 1e-8 && v_unit > v_full,
        format!("full correction {v_full:.2e} (< 1e-8), unit correction {v_unit:.2e}"),
    ))
}

/// Criterion 4: mean and variance of `2·10⁵` post-burn-in states on the
/// 2-D quadratic target against the truncated-Gaussian truth.
pub fn posterior_moments() -> Result<(bool, String)> {
    const STEPS: u64 = 200_000;
    const BURN_IN: u64 = 10_000;
    let target = quadratic_target(2, 1.0, 10.0)?;
    let sampler = AdamMcmc::new(
        AdamParams {
            gamma: 1e-2,
            beta1: 0.9,
            beta2: 0.9,
            delta: 1e-8,
        },
        ProposalParams {
            sigma: 0.3,
            sigma_dir: 10.0,
        },
        CorrectionParams::unit(),
    )?;
    let schedule = ChainSchedule::new(BURN_IN + STEPS, BURN_IN, 1, STEPS)?;
    let state = ChainState::new(&target, vec![0.0; 2], 14)?;
    let run = run_chain(&sampler, &target, state, &schedule, &RunOptions::default())?;
    let truth = truncated_gaussian_variance(1.0, 10.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for j in 0..2 {
        let series: Vec<f64> = run.summary.samples.iter().map(|s| s[j]).collect();
        let m = coordinate_moments(&series, 100);
        let zm = m.mean.abs() / m.mean_se;
        let zv = (m.variance - truth).abs() / m.variance_se;
        ok &= zm < 3.0 && zv < 3.0;
        parts.push(format!(
            "x{j}: mean {zm:.2} SE, var {:.4} vs {truth:.4} ({zv:.2} SE)",
            m.variance
        ));
    }
    Ok((ok, parts.join("; ")))
}

/// `(step, TV)` at each checkpoint.
pub type TvTrace = Vec<(u64, f64)>;

/// Checkpoint TV values plus whether they decrease within the Monte Carlo
/// floor and end below 0.05.
pub fn tv_decay(n_chains: usize, checkpoints: &[u64]) -> Result<(bool, TvTrace, f64)> {
    let target = quadratic_target(1, 1.0, 10.0)?;
    let grid =
        GridDensity::from_target(&target, GridSpec::new(vec![-5.0], vec![5.0], vec![20])?, 16)?;
    let sampler = AdamMcmc::new(
        AdamParams {
            gamma: 1e-2,
            beta1: 0.9,
            beta2: 0.9,
            delta: 1e-8,
        },
        ProposalParams {
            sigma: 0.3,
            sigma_dir: 1.0,
        },
        CorrectionParams::unit(),
    )?;
    let states = (0..n_chains as u64)
        .map(|s| ChainState::new(&target, vec![8.0], 1_000 + s))
        .collect::<Result<Vec<_>>>()?;
    let trace = tv_trace(&sampler, &target, states, checkpoints, &grid)?;
    let floor = tv_noise_floor(&grid, n_chains as u64);
    let monotone = trace.windows(2).all(|w| w[1].1 <= w[0].1 + floor);
    let last = trace.last().map_or(1.0, |t| t.1);
    Ok((monotone && last < 0.05, trace, floor))
}

/// Criterion 5: TV distance of the chain marginal to the gridded 1-D target
/// across checkpoints `10², …, 10⁵`.
pub fn tv_convergence() -> Result<(bool, String)> {
    let (ok, trace, floor) = tv_decay(1_500, &[100, 1_000, 10_000, 100_000])?;
    let shown: Vec<String> = trace
        .iter()
        .map(|(k, tv)| format!("k={k}: {tv:.4}"))
        .collect();
    Ok((
        ok,
        format!("{} (MC floor {floor:.4}, final < 0.05)", shown.join(", ")),
    ))
}

/// Criterion 6: the gradient-drift, isotropic configuration reproduces
/// MALA's accept decisions on a shared RNG stream.
pub fn mala_equivalence() -> Result<(bool, String)> {
    let target = crate::loss::banana_target(2, 1.0, 10.0)?;
    let (gamma, sigma) = (0.05, 0.3);
    let mala = Mala::new(gamma, sigma)?;
    let adam = AdamParams {
        gamma,
        beta1: 0.0,
        beta2: 0.0,
        delta: 1e-8,
    };
    let amc = AdamMcmc::new(
        adam,
        ProposalParams {
            sigma,
            sigma_dir: 0.0,
        },
        CorrectionParams::unit(),
    )?
    .with_drift(Drift::Gradient);
    let mut a = ChainState::new(&target, vec![-0.5, 0.5], 15)?;
    let mut b = ChainState::new(&target, vec![-0.5, 0.5], 15)?;
    let (mut mismatched, mut worst, mut accepted) = (0u32, 0.0f64, 0u32);
    for _ in 0..10_000 {
        let oa = mala.step(&target, &mut a, None)?;
        let ob = amc.step(&target, &mut b, None)?;
        if oa.accepted != ob.accepted || a.theta != b.theta {
            mismatched += 1;
        }
        accepted += u32::from(oa.accepted);
        let (pa, pb) = (oa.log_alpha.exp(), ob.log_alpha.exp());
        if pa > 0.0 || pb > 0.0 {
            worst = worst.max(rel_err(pb, pa));
        }
    }
    Ok((
        mismatched == 0 && worst < 1e-12,
        format!("{mismatched} differing decisions in 10^4 steps ({accepted} accepted), max rel alpha gap {worst:.1e}"),
    ))
}

/// Desk-scale network configuration shared by criteria 7 to 9.
pub fn desk_mlp_config() -> RunConfig {
    RunConfig {
        target: TargetKind::Mlp,
        steps: 2_000,
        burn_in: 1_000,
        gap: 100,
        n_samples: 10,
        replicates: 3,
        ..RunConfig::default()
    }
}

fn mean_by_param(rows: &[ScanRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((p, v)) if *p == r.param => v.push(r.mean_acceptance),
            _ => out.push((r.param, vec![r.mean_acceptance])),
        }
    }
    out.into_iter().map(|(p, v)| (p, stats::mean(&v))).collect()
}

fn fmt_curve(curve: &[(f64, f64)]) -> String {
    curve
        .iter()
        .map(|(p, a)| format!("{p}:{a:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Longest run starting at the first grid point over which the curve
/// rises, ignoring the collapse after its maximum.
fn rising_segment(curve: &[(f64, f64)]) -> &[(f64, f64)] {
    let peak = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map_or(0, |(i, _)| i);
    &curve[..=peak]
}

/// Criterion 7: acceptance against `σ∇` at small `σ`, and against `σ`
/// with and without directional noise.
pub fn acceptance_trends() -> Result<(bool, String)> {
    let base = desk_mlp_config();
    let small_sigma = 0.05 * base.sigma;

    let mut c = base.clone();
    c.sigma = small_sigma;
    let dir_curve = mean_by_param(&scan_acceptance(
        &c,
        ScanParam::SigmaDir,
        &[0.0, 10.0, 1e2, 1e3, 1e4],
    )?);
    let rising = rising_segment(&dir_curve);
    let rho = if rising.len() >= 3 {
        let (x, y): (Vec<f64>, Vec<f64>) = rising.iter().copied().unzip();
        stats::spearman(&x, &y)
    } else {
        f64::NAN
    };
    let ok_a = rising.len() >= 3 && rho > 0.8;

    let sigma_grid = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0];
    let mut c = base.clone();
    c.sigma_dir = Some(0.0);
    let iso_curve = mean_by_param(&scan_acceptance(&c, ScanParam::Sigma, &sigma_grid)?);
    let best = iso_curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map_or(0, |(i, _)| i);
    let ok_b1 = best > 0 && best < iso_curve.len() - 1;

    let mut c = base.clone();
    c.sigma = 1e-4;
    c.sigma_dir = Some(1e2);
    let fractions = crate::par::map_vec((0..base.replicates).collect(), |r| {
        let seed = base.seed + r;
        let exp = Experiment::new(RunConfig { seed, ..c.clone() })?;
        let run = run_chain(
            &exp.sampler,
            &exp.target,
            exp.initial_state(seed)?,
            &exp.config.schedule(),
            &exp.run_options(seed),
        )?;
        Ok(ChainStats::of(&run, 0).acceptance_rate)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let accepted = stats::mean(&fractions);
    let ok_b2 = accepted >= 0.9;

    Ok((
        ok_a && ok_b1 && ok_b2,
        format!(
            "(a) sigma_dir scan {} rising spearman {rho:.2}; (b) sigma scan without directional noise {} interior max: {ok_b1}; accepted fraction at sigma=1e-4, sigma_dir=1e2: {accepted:.3}",
            fmt_curve(&dir_curve),
            fmt_curve(&iso_curve),
        ),
    ))
}

/// Median ensemble spread on test and out-of-distribution inputs for one
/// chain with the given `σ`.
pub fn median_spreads(base: &RunConfig, sigma: f64, seed: u64) -> Result<(f64, f64)> {
    let mut c = base.clone();
    c.sigma = sigma;
    c.seed = seed;
    let exp = Experiment::new(c)?;
    let run = run_chain(
        &exp.sampler,
        &exp.target,
        exp.initial_state(seed)?,
        &exp.config.schedule(),
        &exp.run_options(seed),
    )?;
    let net = exp.net.as_ref().expect("network target");
    let test = exp.test.as_ref().expect("network target");
    let spread = |inputs: &[[f64; 2]]| -> Result<f64> {
        let pred = ensemble_predict(&run.summary.samples, net, inputs, 1)?;
        Ok(stats::median(pred.spread.as_deref().unwrap_or(&[0.0])))
    };
    Ok((
        spread(&test.inputs)?,
        spread(&ood_inputs(test.len(), seed))?,
    ))
}

/// Criterion 8: median test spread non-decreasing in `σ` (one inversion
/// allowed) and OOD spread above in-distribution spread at `σ = 2`.
pub fn posterior_spread() -> Result<(bool, String)> {
    let base = desk_mlp_config();
    let grid = [1.0, 2.0, 4.0, 7.0];
    let jobs: Vec<(f64, u64)> = grid
        .iter()
        .flat_map(|&s| (0..base.replicates).map(move |r| (s, base.seed + r)))
        .collect();
    let results = crate::par::map_vec(jobs.clone(), |(s, seed)| median_spreads(&base, s, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let per = base.replicates as usize;
    let curve: Vec<f64> = results
        .chunks(per)
        .map(|c| stats::mean(&c.iter().map(|r| r.0).collect::<Vec<_>>()))
        .collect();
    let inversions = curve.windows(2).filter(|w| w[1] < w[0]).count();
    let at_two = &results[per..2 * per];
    let (id, ood) = (
        stats::mean(&at_two.iter().map(|r| r.0).collect::<Vec<_>>()),
        stats::mean(&at_two.iter().map(|r| r.1).collect::<Vec<_>>()),
    );
    let shown: Vec<String> = grid
        .iter()
        .zip(&curve)
        .map(|(s, m)| format!("{s}:{m:.4}"))
        .collect();
    Ok((
        inversions <= 1 && ood > id,
        format!(
            "median spread by sigma {} ({inversions} inversions); at sigma=2 OOD {ood:.4} vs test {id:.4}",
            shown.join(" ")
        ),
    ))
}

/// Criterion 9: matched full-data and minibatch chains at the noise level
/// where the isotropic acceptance peaks, pooled over replicate seed pairs.
pub fn stochastic_vs_full() -> Result<(bool, String)> {
    let defaults = RunConfig::default();
    let base = RunConfig {
        sigma: 0.03,
        batch_size: Some(200),
        steps: defaults.steps,
        burn_in: defaults.burn_in,
        gap: defaults.gap,
        ..desk_mlp_config()
    };
    let pairs = crate::par::map_vec((0..base.replicates).collect(), |r| {
        let cmp = compare_full_vs_stochastic_mh(&RunConfig {
            seed: base.seed + r,
            ..base.clone()
        })?;
        Ok((cmp.full_stats, cmp.stochastic_stats))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let avg = |f: &dyn Fn(&(ChainStats, ChainStats)) -> f64| {
        stats::mean(&pairs.iter().map(f).collect::<Vec<_>>())
    };
    let (fa, sa) = (avg(&|p| p.0.mean_acceptance), avg(&|p| p.1.mean_acceptance));
    let dm = rel_err(avg(&|p| p.1.mean_loss), avg(&|p| p.0.mean_loss));
    let dv = rel_err(avg(&|p| p.1.var_loss), avg(&|p| p.0.var_loss));
    Ok((
        fa <= sa && dm < 0.1 && dv < 0.1,
        format!(
            "{} pairs: mean acceptance full {fa:.3} vs stochastic {sa:.3}; loss mean rel diff {dm:.3}, variance rel diff {dv:.3} (< 0.1)",
            pairs.len()
        ),
    ))
}

/// Criterion 10: the same configuration and seed give byte-identical
/// chain records.
pub fn determinism() -> Result<(bool, String)> {
    let c = RunConfig {
        target: TargetKind::Mlp,
        n_train: 200,
        n_test: 50,
        steps: 300,
        burn_in: 100,
        gap: 20,
        n_samples: 10,
        batch_size: Some(50),
        seed: 3,
        ..RunConfig::default()
    };
    let once = || -> Result<Vec<u8>> {
        let exp = Experiment::new(c.clone())?;
        let run = run_chain(
            &exp.sampler,
            &exp.target,
            exp.initial_state(c.seed)?,
            &c.schedule(),
            &exp.run_options(c.seed),
        )?;
        run.record.to_csv_bytes()
    };
    let (a, b) = (once()?, once()?);
    Ok((a == b, format!("{} bytes, identical: {}", a.len(), a == b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rising_segment_stops_at_peak() {
        let c = [(0.0, 0.1), (1.0, 0.5), (2.0, 0.9), (3.0, 0.2)];
        assert_eq!(rising_segment(&c).len(), 3);
        let rows = [
            ScanRow {
                param: 1.0,
                seed: 0,
                mean_acceptance: 0.2,
                metric: 0.0,
            },
            ScanRow {
                param: 1.0,
                seed: 1,
                mean_acceptance: 0.4,
                metric: 0.0,
            },
        ];
        let m = mean_by_param(&rows);
        assert_eq!(m.len(), 1);
        assert!((m[0].1 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn unknown_criterion() {
        assert!(run_criterion(11).is_none());
    }
}
