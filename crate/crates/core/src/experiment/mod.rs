//! Replicated Monte Carlo experiments, their summaries and verdicts, and
//! the persisted report.

mod backbone_suite;
mod config;
mod mass_law;
mod regime;
mod table;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backbone_suite::run_backbone_suite;
pub use config::{Atom, ExperimentConfig, ExperimentSpec, ModelSpec, OutputSpec, Resolved, Sampler, SurvivalProxy};
pub use mass_law::{run_mass_law_suite, run_variance_bridge};
pub use regime::run_regime_experiment;
pub use table::Table;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Regime,
    MassLaw,
    VarianceBridge,
    Backbone,
}

impl Suite {
    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Regime => "regime",
            Suite::MassLaw => "mass_law",
            Suite::VarianceBridge => "variance_bridge",
            Suite::Backbone => "backbone",
        }
    }
}

/// Named summary statistics. Non-finite values are stored as null.
pub type Summary = BTreeMap<String, Option<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub runtime_seconds: f64,
    pub workers: usize,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub suite: Suite,
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub verdicts: Vec<Verdict>,
    pub manifest: Manifest,
    #[serde(skip)]
    pub rows: Table,
}

impl Default for Table {
    fn default() -> Self {
        Table::new(&[])
    }
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied().flatten()
    }

    /// Writes `report.json`, `manifest.json` and `rows.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), pretty(self)?)?;
        fs::write(dir.join("manifest.json"), pretty(&self.manifest)?)?;
        let f = fs::File::create(dir.join("rows.csv"))?;
        self.rows.write_csv(std::io::BufWriter::new(f))
    }

    /// Loads a report written by [`ExperimentReport::write`].
    pub fn read(dir: &Path) -> Result<ExperimentReport> {
        let json = fs::read_to_string(dir.join("report.json"))?;
        let mut rep: ExperimentReport = serde_json::from_str(&json).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        rep.rows = Table::read_csv(fs::File::open(dir.join("rows.csv"))?)?;
        Ok(rep)
    }

    /// Summary recomputed from the stored rows.
    pub fn resummarize(&self) -> Result<Summary> {
        summarize(self.suite, &self.config, &self.rows)
    }

    /// Writes to the configured output directory, if any.
    pub fn persist(&self) -> Result<()> {
        match &self.config.output.dir {
            Some(d) => self.write(d),
            None => Ok(()),
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Recomputes the summary of a suite from its rows and config.
pub fn summarize(suite: Suite, cfg: &ExperimentConfig, rows: &Table) -> Result<Summary> {
    match suite {
        Suite::Regime => regime::summarize(cfg, rows),
        Suite::MassLaw | Suite::VarianceBridge => mass_law::summarize(suite, cfg, rows),
        Suite::Backbone => backbone_suite::summarize(cfg, rows),
    }
}

/// Runs `job` for every replica on a pool of `workers` threads. Output is
/// in replica order whatever the schedule.
pub(crate) fn run_replicas<T, F>(replicas: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| (0..replicas as u64).into_par_iter().map(&job).collect())
}

pub(crate) struct Builder {
    summary: Summary,
    verdicts: Vec<Verdict>,
}

impl Builder {
    pub fn new(summary: Summary) -> Self {
        Builder { summary, verdicts: Vec::new() }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.summary.get(key).copied().flatten().unwrap_or(f64::NAN)
    }

    pub fn verdict(&mut self, name: &str, passed: bool, detail: String) {
        self.verdicts.push(Verdict { name: name.into(), passed, detail });
    }

    pub fn finish(self, suite: Suite, cfg: &ExperimentConfig, rows: Table, start: Instant) -> ExperimentReport {
        ExperimentReport {
            suite,
            config: cfg.clone(),
            summary: self.summary,
            verdicts: self.verdicts,
            manifest: Manifest {
                seed: cfg.experiment.seed,
                config_hash: cfg.hash(),
                runtime_seconds: start.elapsed().as_secs_f64(),
                workers: cfg.experiment.workers,
                version: env!("CARGO_PKG_VERSION").into(),
            },
            rows,
        }
    }
}

pub(crate) fn put(s: &mut Summary, key: impl Into<String>, v: f64) {
    s.insert(key.into(), v.is_finite().then_some(v));
}

/// Mean, variance and their standard errors of `x` under `prefix`.
pub(crate) fn put_moments(s: &mut Summary, prefix: &str, x: &[f64]) {
    use crate::stats::{mean, std_error_of_mean, variance, variance_std_error};
    if x.len() < 2 {
        return;
    }
    put(s, format!("{prefix}.mean"), mean(x));
    put(s, format!("{prefix}.mean_se"), std_error_of_mean(x));
    put(s, format!("{prefix}.var"), variance(x));
    put(s, format!("{prefix}.var_se"), variance_std_error(x));
}
