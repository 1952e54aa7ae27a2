use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{AtomicMeasure, ModelParams, Polynomial, Regime};

/// Model section. Under `regime = "critical"` alpha may be omitted, in
/// which case it is set to exactly 2 mu.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub sigma: f64,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub beta: f64,
    #[serde(default = "one")]
    pub dim: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub position: Vec<f64>,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Every branching event is simulated.
    Exact,
    /// Only lineages alive at the target time are simulated.
    Reconstructed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurvivalProxy {
    /// Population positive at the horizon.
    Alive,
    /// Alive and mass at least half the median surviving mass.
    Strict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Regime requested by the caller; must match the parameters.
    pub regime: Option<Regime>,
    #[serde(default = "default_f")]
    pub f: String,
    #[serde(default)]
    pub nu: Vec<Atom>,
    /// Late time T' of the run.
    pub horizon: f64,
    /// Time t at which fluctuations are read; defaults to horizon / 2.
    #[serde(default)]
    pub checkpoint: Option<f64>,
    pub resolution: usize,
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_sampler")]
    pub sampler: Sampler,
    #[serde(default = "default_cap")]
    pub population_cap: usize,
    #[serde(default = "default_proxy")]
    pub survival_proxy: SurvivalProxy,
    /// Laplace arguments of the mass-law suite.
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    /// Time of the Laplace and variance checks.
    #[serde(default = "one_f")]
    pub laplace_time: f64,
    /// Time of the martingale limit comparison.
    #[serde(default = "default_ks_time")]
    pub ks_time: f64,
    /// Number of compound-Poisson limit draws.
    #[serde(default = "default_draws")]
    pub limit_draws: usize,
    /// Observation times of the backbone suite.
    #[serde(default = "default_observe")]
    pub observe: Vec<f64>,
}

fn default_f() -> String {
    "x".into()
}
fn default_sampler() -> Sampler {
    Sampler::Reconstructed
}
fn default_cap() -> usize {
    crate::particles::DEFAULT_POPULATION_CAP
}
fn default_proxy() -> SurvivalProxy {
    SurvivalProxy::Alive
}
fn default_thetas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn one_f() -> f64 {
    1.0
}
fn default_ks_time() -> f64 {
    10.0
}
fn default_draws() -> usize {
    10_000
}
fn default_observe() -> Vec<f64> {
    vec![2.0, 5.0, 10.0]
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory receiving report.json and rows.csv.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Validated configuration.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub params: ModelParams,
    pub f: Polynomial,
    pub nu: AtomicMeasure,
    pub horizon: f64,
    pub checkpoint: f64,
}

impl ExperimentConfig {
    /// A config with the given model and run sizes, nu = delta_0 and
    /// defaults elsewhere.
    pub fn new(model: ModelSpec, horizon: f64, resolution: usize, replicas: usize) -> Self {
        let dim = model.dim;
        ExperimentConfig {
            model,
            experiment: ExperimentSpec {
                regime: None,
                f: default_f(),
                nu: vec![Atom { position: vec![0.0; dim], mass: 1.0 }],
                horizon,
                checkpoint: None,
                resolution,
                replicas,
                seed: 0,
                workers: 1,
                sampler: default_sampler(),
                population_cap: default_cap(),
                survival_proxy: default_proxy(),
                thetas: default_thetas(),
                laplace_time: 1.0,
                ks_time: default_ks_time(),
                limit_draws: default_draws(),
                observe: default_observe(),
            },
            output: OutputSpec::default(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        let p = match (self.experiment.regime, m.alpha) {
            (Some(Regime::Critical), None) => ModelParams::critical(m.sigma, m.mu, m.beta, m.dim)?,
            (_, Some(a)) => ModelParams::new(m.sigma, m.mu, a, m.beta, m.dim)?,
            (_, None) => return Err(Error::InvalidParameter("model.alpha is required outside the critical regime".into())),
        };
        if let Some(r) = self.experiment.regime {
            if r != p.regime() {
                return Err(Error::Regime(format!(
                    "requested {} regime but alpha = {}, 2 mu = {} is {}",
                    r.as_str(),
                    p.alpha,
                    2.0 * p.mu,
                    p.regime().as_str()
                )));
            }
        }
        Ok(p)
    }

    /// Checks every invariant of the config and builds the typed objects.
    pub fn resolve(&self) -> Result<Resolved> {
        let params = self.params()?;
        let e = &self.experiment;
        let f = Polynomial::parse(&e.f, params.dim)?;
        let atoms = e.nu.iter().map(|a| (a.position.clone(), a.mass)).collect();
        let nu = AtomicMeasure::new(params.dim, atoms)?;
        if e.replicas < 100 {
            return Err(Error::InvalidParameter(format!("replicas must be at least 100, got {}", e.replicas)));
        }
        if !(e.horizon > 0.0 && e.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", e.horizon)));
        }
        let checkpoint = e.checkpoint.unwrap_or(e.horizon / 2.0);
        if !(checkpoint > 0.0 && checkpoint <= e.horizon) {
            return Err(Error::InvalidParameter(format!("checkpoint must lie in (0, horizon], got {checkpoint}")));
        }
        if e.resolution == 0 || e.workers == 0 {
            return Err(Error::InvalidParameter("resolution and workers must be positive".into()));
        }
        if e.thetas.iter().any(|t| !(*t >= 0.0)) || !(e.laplace_time >= 0.0) || !(e.ks_time >= 0.0) {
            return Err(Error::InvalidParameter("thetas and times must be non-negative".into()));
        }
        if e.observe.windows(2).any(|w| w[0] > w[1]) || e.observe.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::InvalidParameter("observe must be sorted and non-negative".into()));
        }
        Ok(Resolved { params, f, nu, horizon: e.horizon, checkpoint })
    }

    /// SHA-256 of the canonical JSON encoding, output section excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSpec::default();
        c.experiment.workers = 1;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
