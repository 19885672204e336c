//! Flat JSON experiment configuration and the objects it builds.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{ChainSchedule, RunOptions};
use crate::error::{Error, Result};
use crate::loss::{data, GibbsTarget, LossOracle, MicroMlp, PriorBox};
use crate::samplers::{
    adam_step, Adam, AdamMcmc, AdamParams, ChainState, CorrectionMode, CorrectionParams, Drift,
    Mala, ProposalParams, Sampler, Sgd, Sghmc,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Quadratic,
    Banana,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Mala,
    Adammcmc,
    Adam,
    Sgd,
    Sghmc,
}

/// Every knob of a run. Missing keys take their defaults; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub target: TargetKind,
    /// Dimension of the analytic targets.
    pub dim: usize,
    /// CSV `x1,x2,label`; generated two-moons data when absent.
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
    pub data_noise: f64,
    pub data_seed: u64,
    pub layers: Vec<usize>,

    pub sampler: SamplerKind,
    pub lambda: f64,
    pub gamma: f64,
    pub sigma: f64,
    /// Defaults to `P / 100`.
    pub sigma_dir: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
    pub prior_half_width: f64,
    pub correction: CorrectionMode,
    /// Stationary momentum variance `s²`; `ρ_l² = (1 - β_l²) s²` unless
    /// `rho1`/`rho2` are given.
    pub s2: f64,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub drift: Drift,
    /// Friction of the SGHMC baseline.
    pub friction: f64,

    pub steps: u64,
    pub burn_in: u64,
    pub gap: u64,
    pub n_samples: u64,
    pub batch_size: Option<usize>,
    /// Log the full-data loss when stepping on minibatches.
    pub record_full_loss: bool,

    /// Starting point; network initialization or the origin when absent.
    pub init: Option<Vec<f64>>,
    /// Full-batch Adam steps taken before the chain starts.
    pub pretrain_steps: u64,
    pub seed: u64,
    pub replicates: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target: TargetKind::Mlp,
            dim: 2,
            train_path: None,
            test_path: None,
            n_train: 2_000,
            n_test: 2_000,
            data_noise: 0.15,
            data_seed: 7,
            layers: MicroMlp::DEFAULT_LAYERS.to_vec(),
            sampler: SamplerKind::Adammcmc,
            lambda: 1.0,
            gamma: 1e-3,
            sigma: 2.0,
            sigma_dir: None,
            beta1: 0.99,
            beta2: 0.99,
            delta: 1e-8,
            prior_half_width: PriorBox::DEFAULT_HALF_WIDTH,
            correction: CorrectionMode::Unit,
            s2: CorrectionParams::DEFAULT_S2,
            rho1: None,
            rho2: None,
            drift: Drift::Adam,
            friction: 0.1,
            steps: 20_000,
            burn_in: 10_000,
            gap: 1_000,
            n_samples: 10,
            batch_size: None,
            record_full_loss: false,
            init: None,
            pretrain_steps: 0,
            seed: 0,
            replicates: 3,
            out_dir: None,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot read {}: {e}", path.display()),
            ))
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON with `out_dir` cleared, so moving the
    /// output does not change the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn schedule(&self) -> ChainSchedule {
        ChainSchedule {
            total_steps: self.steps,
            burn_in: self.burn_in,
            gap: self.gap,
            n_samples: self.n_samples,
        }
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams {
            gamma: self.gamma,
            beta1: self.beta1,
            beta2: self.beta2,
            delta: self.delta,
        }
    }

    pub fn correction_params(&self) -> CorrectionParams {
        let adam = self.adam_params();
        match self.correction {
            CorrectionMode::Unit => CorrectionParams::unit(),
            CorrectionMode::Full => {
                let base = CorrectionParams::full_from_s2(self.s2, &adam);
                CorrectionParams {
                    rho1: self.rho1.unwrap_or(base.rho1),
                    rho2: self.rho2.unwrap_or(base.rho2),
                    ..base
                }
            }
        }
    }

    /// Checks every field, naming the offending one.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("sigma", self.sigma),
            ("delta", self.delta),
            ("prior_half_width", self.prior_half_width),
            ("s2", self.s2),
        ] {
            positive(name, v)?;
        }
        if let Some(v) = self.sigma_dir {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "sigma_dir",
                    format!("must be non-negative and finite, got {v}"),
                ));
            }
        }
        for (name, v) in [("rho1", self.rho1), ("rho2", self.rho2)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if !(self.data_noise >= 0.0 && self.data_noise.is_finite()) {
            return Err(Error::invalid("data_noise", "must be non-negative"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if self.target == TargetKind::Banana && self.dim < 2 {
            return Err(Error::invalid(
                "dim",
                "banana target needs at least 2 dimensions",
            ));
        }
        if self.target == TargetKind::Mlp {
            if self.train_path.is_none() && self.n_train == 0 {
                return Err(Error::invalid("n_train", "must be at least 1"));
            }
            if self.test_path.is_none() && self.n_test == 0 {
                return Err(Error::invalid("n_test", "must be at least 1"));
            }
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        self.adam_params().validate()?;
        if !(0.0..=1.0).contains(&self.friction) {
            return Err(Error::invalid(
                "friction",
                format!("must lie in [0, 1], got {}", self.friction),
            ));
        }
        self.schedule().validate()
    }
}

/// Built objects behind a validated [`RunConfig`].
pub struct Experiment {
    pub config: RunConfig,
    pub target: GibbsTarget,
    pub sampler: Sampler,
    pub net: Option<Arc<MicroMlp>>,
    pub test: Option<data::Dataset>,
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let prior = PriorBox::new(config.prior_half_width)?;
        let (oracle, net, test): (Arc<dyn LossOracle>, _, _) = match config.target {
            TargetKind::Quadratic => (
                Arc::new(crate::loss::Quadratic::new(config.dim)?),
                None,
                None,
            ),
            TargetKind::Banana => (Arc::new(crate::loss::Banana::new(config.dim)?), None, None),
            TargetKind::Mlp => {
                let (train, test) = load_data(&config)?;
                let net = Arc::new(MicroMlp::new(config.layers.clone(), Arc::new(train))?);
                (net.clone(), Some(net), Some(test))
            }
        };
        let target = GibbsTarget::new(oracle, config.lambda, prior)?;
        let sampler = build_sampler(&config, target.dim())?;
        Ok(Self {
            config,
            target,
            sampler,
            net,
            test,
        })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn sigma_dir(&self) -> f64 {
        resolved_sigma_dir(&self.config, self.dim())
    }

    pub fn run_options(&self, seed: u64) -> RunOptions {
        RunOptions {
            batch_size: self.config.batch_size,
            batch_seed: seed,
            record_full_loss: self.config.record_full_loss,
        }
    }

    /// Starting state for a chain with `seed`: configured or freshly
    /// initialized parameters, then `pretrain_steps` of full-batch Adam.
    pub fn initial_state(&self, seed: u64) -> Result<ChainState> {
        let theta = match (&self.config.init, &self.net) {
            (Some(v), _) => v.clone(),
            (None, Some(net)) => net.init_params(&mut ChaCha8Rng::seed_from_u64(seed)),
            (None, None) => vec![0.0; self.dim()],
        };
        let mut state = ChainState::new(&self.target, theta, seed)?;
        let adam = self.config.adam_params();
        for _ in 0..self.config.pretrain_steps {
            adam_step(&mut state, &self.target, &adam, None)?;
        }
        state.momenta = crate::samplers::Momenta::zeros(self.dim());
        state.step = 0;
        Ok(state)
    }
}

fn resolved_sigma_dir(config: &RunConfig, dim: usize) -> f64 {
    config.sigma_dir.unwrap_or(dim as f64 / 100.0)
}

fn build_sampler(config: &RunConfig, dim: usize) -> Result<Sampler> {
    Ok(match config.sampler {
        SamplerKind::Mala => Sampler::Mala(Mala::new(config.gamma, config.sigma)?),
        SamplerKind::Adammcmc => {
            let proposal = ProposalParams {
                sigma: config.sigma,
                sigma_dir: resolved_sigma_dir(config, dim),
            };
            Sampler::AdamMcmc(
                AdamMcmc::new(config.adam_params(), proposal, config.correction_params())?
                    .with_drift(config.drift),
            )
        }
        SamplerKind::Adam => Sampler::Adam(Adam(config.adam_params())),
        SamplerKind::Sgd => Sampler::Sgd(Sgd {
            gamma: config.gamma,
        }),
        SamplerKind::Sghmc => Sampler::Sghmc(Sghmc::new(config.gamma, config.friction)?),
    })
}

fn load_data(config: &RunConfig) -> Result<(data::Dataset, data::Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.data_seed);
    let train = match &config.train_path {
        Some(p) => data::Dataset::read_csv(p)?,
        None => data::two_moons(config.n_train, config.data_noise, &mut rng),
    };
    let test = match &config.test_path {
        Some(p) => data::Dataset::read_csv(p)?,
        None => data::two_moons(config.n_test, config.data_noise, &mut rng),
    };
    Ok((train, test))
}

/// Out-of-distribution inputs on a ring around the two-moons support.
pub fn ood_inputs(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    data::ood_ring(n, 3.0, 4.0, &mut rng)
}
