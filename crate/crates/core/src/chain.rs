//! Burn-in, thinning, sample collection and ensemble prediction.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::loss::{BatchStream, GibbsTarget, MicroMlp};
use crate::par;
use crate::samplers::{ChainState, Kernel, Rejection};
use crate::stats;

/// Total length `T`, burn-in `b`, gap `c` and sample count `N`; samples
/// are taken after steps `b + c, b + 2c, ..., b + Nc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSchedule {
    pub total_steps: u64,
    pub burn_in: u64,
    pub gap: u64,
    pub n_samples: u64,
}

impl Default for ChainSchedule {
    fn default() -> Self {
        Self {
            total_steps: 20_000,
            burn_in: 10_000,
            gap: 1_000,
            n_samples: 10,
        }
    }
}

impl ChainSchedule {
    pub fn new(total_steps: u64, burn_in: u64, gap: u64, n_samples: u64) -> Result<Self> {
        let s = Self {
            total_steps,
            burn_in,
            gap,
            n_samples,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gap == 0 {
            return Err(Error::InvalidSchedule("gap must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidSchedule(
                "n_samples must be at least 1".into(),
            ));
        }
        let last = self
            .n_samples
            .checked_mul(self.gap)
            .and_then(|x| x.checked_add(self.burn_in));
        match last {
            Some(last) if last <= self.total_steps => Ok(()),
            _ => Err(Error::InvalidSchedule(format!(
                "burn_in + n_samples * gap = {} + {} * {} exceeds total_steps {}",
                self.burn_in, self.n_samples, self.gap, self.total_steps
            ))),
        }
    }

    pub fn sample_steps(&self) -> Vec<u64> {
        (1..=self.n_samples)
            .map(|i| self.burn_in + i * self.gap)
            .collect()
    }

    fn is_sample_step(&self, step: u64) -> bool {
        step > self.burn_in
            && (step - self.burn_in).is_multiple_of(self.gap)
            && (step - self.burn_in) / self.gap <= self.n_samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecordRow {
    pub step: u64,
    pub loss: f64,
    pub log_alpha: f64,
    pub accepted: bool,
    pub theta_norm: f64,
    pub u_norm: f64,
}

#[derive(Serialize)]
struct CsvRow {
    step: u64,
    loss: f64,
    log_alpha: f64,
    accepted: u8,
    theta_norm: f64,
    u_norm: f64,
}

/// Per-step log of one chain.
#[derive(Debug, Clone, Default)]
pub struct ChainRecord {
    pub rows: Vec<RecordRow>,
    pub wall_times: Vec<Duration>,
    pub boundary_rejections: u64,
    pub nonfinite_rejections: u64,
}

impl ChainRecord {
    pub fn acceptance_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.accepted).count() as f64 / self.rows.len() as f64
    }

    /// Mean of `α` over steps, the quantity plotted as "mean acceptance".
    pub fn mean_alpha(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.log_alpha.exp()).sum::<f64>() / self.rows.len() as f64
    }

    /// Mean `α` over steps after `burn_in`.
    pub fn mean_alpha_after(&self, burn_in: u64) -> f64 {
        let a: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.step > burn_in)
            .map(|r| r.log_alpha.exp())
            .collect();
        if a.is_empty() {
            return 0.0;
        }
        stats::mean(&a)
    }

    pub fn losses_after(&self, burn_in: u64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.step > burn_in)
            .map(|r| r.loss)
            .collect()
    }

    /// CSV with columns `step,loss,log_alpha,accepted,theta_norm,u_norm`.
    /// Wall times are not written so that reruns are byte-identical.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        for r in &self.rows {
            w.serialize(CsvRow {
                step: r.step,
                loss: r.loss,
                log_alpha: r.log_alpha,
                accepted: u8::from(r.accepted),
                theta_norm: r.theta_norm,
                u_norm: r.u_norm,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}

/// Thinned samples of one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub sample_steps: Vec<u64>,
    pub samples: Vec<Vec<f64>>,
}

impl EnsembleSummary {
    /// One row of `P` floats per sample.
    pub fn write_samples_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_samples_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        let mut out = Vec::new();
        for row in r.deserialize() {
            out.push(row?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Minibatch size; `None` runs on the full data.
    pub batch_size: Option<usize>,
    /// Seed of the minibatch shuffling stream.
    pub batch_seed: u64,
    /// Log the full-data loss even when stepping on minibatches.
    pub record_full_loss: bool,
}

/// Everything a finished chain produces.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub summary: EnsembleSummary,
    pub record: ChainRecord,
    pub final_state: ChainState,
}

fn batch_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Runs `schedule.total_steps` steps of `kernel`, keeping `ϑ` at the
/// schedule's sample steps and logging every step. Sample steps count from
/// the start of this run, not from `state.step`.
pub fn run_chain<K: Kernel + ?Sized>(
    kernel: &K,
    target: &GibbsTarget,
    mut state: ChainState,
    schedule: &ChainSchedule,
    opts: &RunOptions,
) -> Result<ChainRun> {
    schedule.validate()?;
    let mut batches = match opts.batch_size {
        Some(b) => Some(BatchStream::new(
            target.oracle().n_points(),
            b,
            batch_rng(opts.batch_seed),
        )?),
        None => None,
    };
    let mut record = ChainRecord {
        rows: Vec::with_capacity(schedule.total_steps as usize),
        wall_times: Vec::with_capacity(schedule.total_steps as usize),
        ..ChainRecord::default()
    };
    let mut summary = EnsembleSummary::default();

    for t in 1..=schedule.total_steps {
        let started = Instant::now();
        let batch = batches.as_mut().map(|b| b.next_batch().to_vec());
        let out = kernel.step(target, &mut state, batch.as_deref())?;
        record.wall_times.push(started.elapsed());
        match out.rejection {
            Some(Rejection::Boundary) => record.boundary_rejections += 1,
            Some(Rejection::NonFinite) => record.nonfinite_rejections += 1,
            None => {}
        }
        let loss = if opts.record_full_loss && batch.is_some() {
            target.oracle().eval(&state.theta)?
        } else {
            state.cached_loss
        };
        record.rows.push(RecordRow {
            step: state.step,
            loss,
            log_alpha: out.log_alpha,
            accepted: out.accepted,
            theta_norm: norm(&state.theta),
            u_norm: out.u_norm,
        });
        if schedule.is_sample_step(t) {
            summary.sample_steps.push(t);
            summary.samples.push(state.theta.clone());
        }
    }
    Ok(ChainRun {
        summary,
        record,
        final_state: state,
    })
}

/// Independent chains, in parallel when the `parallel` feature is enabled.
pub fn run_chains<K: Kernel + ?Sized>(
    kernel: &K,
    target: &GibbsTarget,
    states: Vec<ChainState>,
    schedule: &ChainSchedule,
    opts: &RunOptions,
) -> Vec<Result<ChainRun>> {
    par::map_vec(states, |s| run_chain(kernel, target, s, schedule, opts))
}

/// Posterior mean of one class probability and its interquartile spread
/// across ensemble members, per input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub mean: Vec<f64>,
    /// `None` with fewer than two members.
    pub spread: Option<Vec<f64>>,
}

/// Class-`class` probability of every member (rows) at every input (columns).
pub fn member_probabilities(
    samples: &[Vec<f64>],
    net: &MicroMlp,
    inputs: &[[f64; 2]],
    class: usize,
) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|s| net.class_probability(s, inputs, class))
        .collect()
}

pub fn ensemble_predict(
    samples: &[Vec<f64>],
    net: &MicroMlp,
    inputs: &[[f64; 2]],
    class: usize,
) -> Result<EnsemblePrediction> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: 1,
            actual: 0,
        });
    }
    let members = member_probabilities(samples, net, inputs, class)?;
    Ok(summarize_members(&members))
}

pub(crate) fn summarize_members(members: &[Vec<f64>]) -> EnsemblePrediction {
    let n_inputs = members[0].len();
    let column = |j: usize| members.iter().map(|m| m[j]).collect::<Vec<f64>>();
    let mean = (0..n_inputs).map(|j| stats::mean(&column(j))).collect();
    let spread =
        (members.len() >= 2).then(|| (0..n_inputs).map(|j| stats::iqr(&column(j))).collect());
    EnsemblePrediction { mean, spread }
}

/// Full probability vectors averaged over members.
pub fn ensemble_mean_probs(
    samples: &[Vec<f64>],
    net: &MicroMlp,
    inputs: &[[f64; 2]],
) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: 1,
            actual: 0,
        });
    }
    let mut acc = vec![vec![0.0; net.n_classes()]; inputs.len()];
    for s in samples {
        for (a, p) in acc.iter_mut().zip(net.forward(s, inputs)?) {
            a.iter_mut().zip(p).for_each(|(x, y)| *x += y);
        }
    }
    let n = samples.len() as f64;
    acc.iter_mut()
        .for_each(|row| row.iter_mut().for_each(|x| *x /= n));
    Ok(acc)
}
