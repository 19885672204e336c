//! `adammcmc` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::chain::{ensemble_predict, run_chain, ChainRun, EnsemblePrediction};
use crate::config::{ood_inputs, Experiment, RunConfig};
use crate::diagnostics::{
    compare_full_vs_stochastic_mh, ensemble_accuracy, scan_acceptance, write_scan_csv, ScanParam,
    ScanRow,
};
use crate::error::{Error, Result};
use crate::stats;
use crate::verify;

pub const SCHEMA_VERSION: u32 = 1;
/// Root directory for runs that do not name an output directory.
pub const OUTPUT_ROOT_ENV: &str = "ADAMMCMC_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "adammcmc",
    version,
    about = "Metropolis-adjusted Adam sampling experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one chain and write its record, samples and summaries.
    Run(Common),
    /// Scan one hyperparameter over a grid with replicate seeds.
    Scan {
        #[command(flatten)]
        common: Common,
        /// sigma, sigma_dir, beta or lambda.
        #[arg(long)]
        param: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Vec<f64>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run matched full-data and minibatch chains.
    CompareMh(Common),
    /// Run the numbered acceptance checks.
    Verify {
        /// Only the fast checks.
        #[arg(long)]
        quick: bool,
        /// Run only the listed checks (repeatable).
        #[arg(long = "criterion")]
        only: Vec<u8>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) => 3,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> std::result::Result<u8, Failure> {
    match cmd {
        Command::Run(c) => cmd_run(&c),
        Command::Scan {
            common,
            param,
            grid,
            jobs,
        } => cmd_scan(&common, &param, &grid, jobs),
        Command::CompareMh(c) => cmd_compare(&c),
        Command::Verify { quick, only } => cmd_verify(quick, &only),
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut config = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        config.seed = s;
    }
    if let Some(o) = &c.out {
        config.out_dir = Some(o.clone());
    }
    config.validate()?;
    Ok(config)
}

/// `--out`, then the configured `out_dir`, then
/// `$ADAMMCMC_OUTPUT_ROOT/<command>-<hash>` (root `runs` by default).
fn output_dir(config: &RunConfig, command: &str) -> PathBuf {
    if let Some(d) = &config.out_dir {
        return d.clone();
    }
    let root =
        std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(format!("{command}-{}", &config.hash()[..12]))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_manifest(dir: &Path, command: &str, config: &RunConfig, files: &[&str]) -> Result<()> {
    write_json(
        &dir.join("config.json"),
        &serde_json::from_str::<serde_json::Value>(&config.to_json())?,
    )?;
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config_hash": config.hash(),
            "seed": config.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "parallel": crate::par::is_parallel(),
            "files": files,
        }),
    )
}

#[derive(Serialize)]
struct PredictionSummary {
    test_accuracy: f64,
    test: EnsemblePrediction,
    ood_inputs: Vec<[f64; 2]>,
    ood: EnsemblePrediction,
    median_spread_test: Option<f64>,
    median_spread_ood: Option<f64>,
}

fn prediction_summary(exp: &Experiment, run: &ChainRun) -> Result<Option<PredictionSummary>> {
    let (Some(net), Some(test)) = (&exp.net, &exp.test) else {
        return Ok(None);
    };
    let samples = &run.summary.samples;
    let ood_in = ood_inputs(test.len(), exp.config.seed);
    let test_pred = ensemble_predict(samples, net, &test.inputs, 1)?;
    let ood_pred = ensemble_predict(samples, net, &ood_in, 1)?;
    Ok(Some(PredictionSummary {
        test_accuracy: ensemble_accuracy(samples, net, test)?,
        median_spread_test: test_pred.spread.as_deref().map(stats::median),
        median_spread_ood: ood_pred.spread.as_deref().map(stats::median),
        test: test_pred,
        ood_inputs: ood_in,
        ood: ood_pred,
    }))
}

fn cmd_run(c: &Common) -> std::result::Result<u8, Failure> {
    let config = load_config(c)?;
    let dir = output_dir(&config, "run");
    let exp = Experiment::new(config.clone())?;
    let run = run_chain(
        &exp.sampler,
        &exp.target,
        exp.initial_state(config.seed)?,
        &config.schedule(),
        &exp.run_options(config.seed),
    )?;
    fs::create_dir_all(&dir)?;
    run.record
        .write_csv(fs::File::create(dir.join("record.csv"))?)?;
    run.summary.write_samples_csv(dir.join("samples.csv"))?;
    write_json(
        &dir.join("samples.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "dim": exp.dim(),
            "schedule": config.schedule(),
            "sample_steps": run.summary.sample_steps,
            "config_hash": config.hash(),
            "seed": config.seed,
        }),
    )?;
    let rec = &run.record;
    write_json(
        &dir.join("summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "acceptance_rate": rec.acceptance_rate(),
            "mean_acceptance": rec.mean_alpha_after(config.burn_in),
            "boundary_rejections": rec.boundary_rejections,
            "nonfinite_rejections": rec.nonfinite_rejections,
            "final_loss": run.final_state.cached_loss,
            "n_samples": run.summary.samples.len(),
            "prediction": prediction_summary(&exp, &run)?,
        }),
    )?;
    write_manifest(
        &dir,
        "run",
        &config,
        &[
            "record.csv",
            "samples.csv",
            "samples.json",
            "summary.json",
            "config.json",
        ],
    )?;
    println!(
        "{} steps, acceptance rate {:.3}, outputs in {}",
        rec.rows.len(),
        rec.acceptance_rate(),
        dir.display()
    );
    Ok(0)
}

/// Per-value mean and standard deviation across replicate seeds.
fn write_scan_table(rows: &[ScanRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "param",
        "n",
        "mean_acceptance",
        "mean_acceptance_sd",
        "metric",
        "metric_sd",
    ])?;
    let mut i = 0;
    while i < rows.len() {
        let j = rows[i..]
            .iter()
            .position(|r| r.param != rows[i].param)
            .map_or(rows.len(), |k| i + k);
        let acc: Vec<f64> = rows[i..j].iter().map(|r| r.mean_acceptance).collect();
        let met: Vec<f64> = rows[i..j].iter().map(|r| r.metric).collect();
        let sd = |v: &[f64]| {
            if v.len() > 1 {
                stats::variance(v).sqrt()
            } else {
                0.0
            }
        };
        w.write_record([
            rows[i].param.to_string(),
            acc.len().to_string(),
            stats::mean(&acc).to_string(),
            sd(&acc).to_string(),
            stats::mean(&met).to_string(),
            sd(&met).to_string(),
        ])?;
        i = j;
    }
    w.flush()?;
    Ok(())
}

fn cmd_scan(
    c: &Common,
    param: &str,
    grid: &[f64],
    jobs: Option<usize>,
) -> std::result::Result<u8, Failure> {
    let param: ScanParam = param.parse()?;
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must contain at least one value").into());
    }
    let config = load_config(c)?;
    let dir = output_dir(&config, "scan");
    let rows = with_jobs(jobs, || scan_acceptance(&config, param, grid))??;
    fs::create_dir_all(&dir)?;
    write_scan_csv(&rows, fs::File::create(dir.join("scan.csv"))?)?;
    write_scan_table(&rows, &dir.join("scan_table.csv"))?;
    write_manifest(
        &dir,
        "scan",
        &config,
        &["scan.csv", "scan_table.csv", "config.json"],
    )?;
    println!(
        "{} rows for {}, outputs in {}",
        rows.len(),
        param.name(),
        dir.display()
    );
    Ok(0)
}

#[cfg(feature = "parallel")]
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("jobs", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))
            .map(|pool| pool.install(f)),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == Some(0) {
        return Err(Error::invalid("jobs", "must be at least 1"));
    }
    Ok(f())
}

fn cmd_compare(c: &Common) -> std::result::Result<u8, Failure> {
    let config = load_config(c)?;
    let dir = output_dir(&config, "compare-mh");
    let cmp = compare_full_vs_stochastic_mh(&config)?;
    fs::create_dir_all(&dir)?;
    cmp.full
        .record
        .write_csv(fs::File::create(dir.join("full_record.csv"))?)?;
    cmp.stochastic
        .record
        .write_csv(fs::File::create(dir.join("stochastic_record.csv"))?)?;
    write_json(
        &dir.join("comparison.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "burn_in": config.burn_in,
            "batch_size": config.batch_size,
            "full": cmp.full_stats,
            "stochastic": cmp.stochastic_stats,
        }),
    )?;
    write_manifest(
        &dir,
        "compare-mh",
        &config,
        &[
            "full_record.csv",
            "stochastic_record.csv",
            "comparison.json",
            "config.json",
        ],
    )?;
    println!(
        "mean acceptance full {:.3}, stochastic {:.3}; outputs in {}",
        cmp.full_stats.mean_acceptance,
        cmp.stochastic_stats.mean_acceptance,
        dir.display()
    );
    Ok(0)
}

fn cmd_verify(quick: bool, only: &[u8]) -> std::result::Result<u8, Failure> {
    let ids: &[u8] = match (only.is_empty(), quick) {
        (false, _) => only,
        (true, true) => &verify::QUICK,
        (true, false) => &verify::ALL,
    };
    let mut failed = 0;
    for &id in ids {
        let report = verify::run_criterion(id)
            .ok_or_else(|| Error::invalid("criterion", format!("no criterion numbered {id}")))?;
        println!("{report}");
        failed += usize::from(!report.passed);
    }
    println!("{} of {} checks passed", ids.len() - failed, ids.len());
    Ok(u8::from(failed > 0))
}
