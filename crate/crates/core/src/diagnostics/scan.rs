//! Hyperparameter scans and the full-versus-minibatch M-H comparison.

use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::chain::{ensemble_mean_probs, run_chain, ChainRun, RunOptions};
use crate::config::{Experiment, RunConfig, TargetKind};
use crate::error::{Error, Result};
use crate::loss::Dataset;
use crate::par;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanParam {
    Sigma,
    SigmaDir,
    /// Sets `β₁` and `β₂` together.
    Beta,
    Lambda,
}

impl ScanParam {
    pub fn name(self) -> &'static str {
        match self {
            ScanParam::Sigma => "sigma",
            ScanParam::SigmaDir => "sigma_dir",
            ScanParam::Beta => "beta",
            ScanParam::Lambda => "lambda",
        }
    }

    pub fn apply(self, config: &mut RunConfig, value: f64) {
        match self {
            ScanParam::Sigma => config.sigma = value,
            ScanParam::SigmaDir => config.sigma_dir = Some(value),
            ScanParam::Beta => {
                config.beta1 = value;
                config.beta2 = value;
            }
            ScanParam::Lambda => config.lambda = value,
        }
    }
}

impl FromStr for ScanParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(ScanParam::Sigma),
            "sigma_dir" => Ok(ScanParam::SigmaDir),
            "beta" => Ok(ScanParam::Beta),
            "lambda" => Ok(ScanParam::Lambda),
            other => Err(Error::invalid(
                "param",
                format!(
                    "unknown scan parameter {other:?}; expected sigma, sigma_dir, beta or lambda"
                ),
            )),
        }
    }
}

/// One chain of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub param: f64,
    pub seed: u64,
    /// Mean `α` after burn-in.
    pub mean_acceptance: f64,
    /// Test accuracy of the ensemble mean (network targets), worst
    /// per-coordinate second-moment error against the truncated-Gaussian
    /// truth (quadratic) or mean post-burn-in loss (banana).
    pub metric: f64,
}

/// Runs `config.replicates` chains (seeds `config.seed + r`) for every grid
/// value. Rows come back grid-major in grid order.
pub fn scan_acceptance(base: &RunConfig, param: ScanParam, grid: &[f64]) -> Result<Vec<ScanRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must contain at least one value"));
    }
    let jobs: Vec<(f64, u64)> = grid
        .iter()
        .flat_map(|&v| (0..base.replicates).map(move |r| (v, base.seed + r)))
        .collect();
    let experiments: Vec<Experiment> = grid
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            param.apply(&mut c, v);
            Experiment::new(c)
        })
        .collect::<Result<_>>()?;
    let per_value = base.replicates as usize;
    par::map_vec(
        jobs.into_iter().enumerate().collect(),
        |(i, (value, seed))| {
            let exp = &experiments[i / per_value];
            let run = run_chain(
                &exp.sampler,
                &exp.target,
                exp.initial_state(seed)?,
                &exp.config.schedule(),
                &exp.run_options(seed),
            )?;
            Ok(ScanRow {
                param: value,
                seed,
                mean_acceptance: run.record.mean_alpha_after(exp.config.burn_in),
                metric: chain_metric(exp, &run)?,
            })
        },
    )
    .into_iter()
    .collect()
}

fn chain_metric(exp: &Experiment, run: &ChainRun) -> Result<f64> {
    match exp.config.target {
        TargetKind::Mlp => {
            let net = exp.net.as_ref().expect("network target has a network");
            let test = exp.test.as_ref().expect("network target has test data");
            ensemble_accuracy(&run.summary.samples, net, test)
        }
        TargetKind::Quadratic => {
            let truth =
                super::truncated_gaussian_variance(exp.config.lambda, exp.config.prior_half_width);
            let samples = &run.summary.samples;
            Ok((0..exp.dim())
                .map(|j| {
                    let m2 = stats::mean(&samples.iter().map(|s| s[j] * s[j]).collect::<Vec<_>>());
                    (m2 - truth).abs()
                })
                .fold(0.0, f64::max))
        }
        TargetKind::Banana => Ok(stats::mean(&run.record.losses_after(exp.config.burn_in))),
    }
}

/// Accuracy of the argmax of the ensemble-mean class probabilities.
pub fn ensemble_accuracy(
    samples: &[Vec<f64>],
    net: &crate::loss::MicroMlp,
    data: &Dataset,
) -> Result<f64> {
    let probs = ensemble_mean_probs(samples, net, &data.inputs)?;
    Ok(crate::loss::mlp::accuracy_of(&probs, &data.labels))
}

/// Long-format CSV `param,seed,mean_acceptance,metric`.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Loss and acceptance summary of one chain after burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainStats {
    pub mean_loss: f64,
    pub var_loss: f64,
    pub mean_acceptance: f64,
    pub acceptance_rate: f64,
}

impl ChainStats {
    pub fn of(run: &ChainRun, burn_in: u64) -> Self {
        let losses = run.record.losses_after(burn_in);
        let accepted: Vec<f64> = run
            .record
            .rows
            .iter()
            .filter(|r| r.step > burn_in)
            .map(|r| f64::from(u8::from(r.accepted)))
            .collect();
        Self {
            mean_loss: stats::mean(&losses),
            var_loss: stats::variance(&losses),
            mean_acceptance: run.record.mean_alpha_after(burn_in),
            acceptance_rate: stats::mean(&accepted),
        }
    }
}

/// Paired chains from one starting point and RNG seed, one corrected with
/// the full-data loss and one with minibatch estimates.
pub struct MhComparison {
    pub full: ChainRun,
    pub stochastic: ChainRun,
    pub full_stats: ChainStats,
    pub stochastic_stats: ChainStats,
}

/// Runs the configured sampler twice from the same initial state and seed:
/// once on the full data and once on minibatches of `config.batch_size`.
/// The minibatch chain logs full-data losses so both loss series are
/// comparable.
pub fn compare_full_vs_stochastic_mh(config: &RunConfig) -> Result<MhComparison> {
    let batch_size = config.batch_size.ok_or_else(|| {
        Error::invalid(
            "batch_size",
            "required for the full-versus-minibatch comparison",
        )
    })?;
    let exp = Experiment::new(config.clone())?;
    let schedule = config.schedule();
    let init = exp.initial_state(config.seed)?;
    let full_opts = RunOptions {
        batch_size: None,
        ..exp.run_options(config.seed)
    };
    let stoch_opts = RunOptions {
        batch_size: Some(batch_size),
        record_full_loss: true,
        batch_seed: config.seed,
    };
    let mut runs = par::map_vec(vec![full_opts, stoch_opts], |o| {
        run_chain(&exp.sampler, &exp.target, init.clone(), &schedule, &o)
    })
    .into_iter();
    let full = runs.next().expect("two runs")?;
    let stochastic = runs.next().expect("two runs")?;
    Ok(MhComparison {
        full_stats: ChainStats::of(&full, config.burn_in),
        stochastic_stats: ChainStats::of(&stochastic, config.burn_in),
        full,
        stochastic,
    })
}
