//! Config loading: a TOML file (or the built-in default), then the
//! environment, then flags.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use oulab_core::experiment::ExperimentConfig;
use toml::{Table, Value};

pub const DEFAULT_CONFIG: &str = r#"[model]
sigma = 1.0
mu = 1.0
alpha = 1.0
beta = 1.0
dim = 1

[experiment]
horizon = 10.0
resolution = 100
replicas = 1000
"#;

pub const SEED_ENV: &str = "OULAB_SEED";
pub const WORKERS_ENV: &str = "OULAB_WORKERS";

#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// TOML config file; the built-in default is used when absent
    #[arg(long, short = 'c', value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// slow, critical or fast; must match the parameters
    #[arg(long)]
    pub regime: Option<String>,
    /// Test function, e.g. "x1^3 - 2*x1*x2"; a bare x means x1
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub checkpoint: Option<f64>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// exact or reconstructed
    #[arg(long)]
    pub sampler: Option<String>,
    /// alive or strict
    #[arg(long)]
    pub survival_proxy: Option<String>,
    /// Output directory for report.json, manifest.json and rows.csv
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Any config key, e.g. --set experiment.thetas=[1,3]
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed key '{key}'");
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("'{p}' in '{key}' is not a section"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn get_path<'a>(root: &'a Table, key: &str) -> Option<&'a Value> {
    let mut parts = key.split('.');
    let mut v = root.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

fn env_number(name: &str) -> Result<Option<i64>> {
    match std::env::var(name) {
        Ok(s) => s.trim().parse::<i64>().map(Some).with_context(|| format!("{name}={s} is not an integer")),
        Err(_) => Ok(None),
    }
}

pub fn read_table(path: Option<&Path>) -> Result<Table> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => DEFAULT_CONFIG.to_string(),
    };
    text.parse::<Table>().map_err(|e| anyhow!("malformed config: {e}"))
}

impl ConfigArgs {
    /// The merged config as a TOML table, before validation.
    pub fn table(&self) -> Result<Table> {
        let mut t = read_table(self.config.as_deref())?;
        // The environment only fills what the file leaves unset.
        for (env, key) in [(SEED_ENV, "experiment.seed"), (WORKERS_ENV, "experiment.workers")] {
            if get_path(&t, key).is_none() {
                if let Some(v) = env_number(env)? {
                    set_path(&mut t, key, Value::Integer(v))?;
                }
            }
        }
        let float = |v: f64| Value::Float(v);
        let int = |v: usize| Value::Integer(v as i64);
        let string = |v: &String| Value::String(v.clone());
        let flags: Vec<(&str, Option<Value>)> = vec![
            ("experiment.seed", self.seed.map(|v| Value::Integer(v as i64))),
            ("experiment.workers", self.workers.map(int)),
            ("model.sigma", self.sigma.map(float)),
            ("model.mu", self.mu.map(float)),
            ("model.alpha", self.alpha.map(float)),
            ("model.beta", self.beta.map(float)),
            ("model.dim", self.dim.map(int)),
            ("experiment.regime", self.regime.as_ref().map(string)),
            ("experiment.f", self.f.as_ref().map(string)),
            ("experiment.horizon", self.horizon.map(float)),
            ("experiment.checkpoint", self.checkpoint.map(float)),
            ("experiment.resolution", self.resolution.map(int)),
            ("experiment.replicas", self.replicas.map(int)),
            ("experiment.sampler", self.sampler.as_ref().map(string)),
            ("experiment.survival_proxy", self.survival_proxy.as_ref().map(string)),
            ("output.dir", self.out.as_ref().map(|p| Value::String(p.display().to_string()))),
        ];
        for (key, v) in flags {
            if let Some(v) = v {
                set_path(&mut t, key, v)?;
            }
        }
        for s in &self.sets {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{s}'"))?;
            set_path(&mut t, k.trim(), parse_value(v.trim()))?;
        }
        // A missing nu is a unit atom at the origin.
        if get_path(&t, "experiment.nu").is_none() {
            let dim = get_path(&t, "model.dim").and_then(Value::as_integer).unwrap_or(1).max(0) as usize;
            let mut atom = Table::new();
            atom.insert("position".into(), Value::Array(vec![Value::Float(0.0); dim]));
            atom.insert("mass".into(), Value::Float(1.0));
            set_path(&mut t, "experiment.nu", Value::Array(vec![Value::Table(atom)]))?;
        }
        Ok(t)
    }

    pub fn load(&self) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = self.table()?.try_into().map_err(|e| anyhow!("invalid config: {e}"))?;
        cfg.resolve()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse_as_toml_then_fall_back_to_strings() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("[1.0, 2.0]"), Value::Array(vec![Value::Float(1.0), Value::Float(2.0)]));
        assert_eq!(parse_value("x^2 - 1"), Value::String("x^2 - 1".into()));
    }

    #[test]
    fn flags_override_file_values() {
        let args = ConfigArgs { replicas: Some(321), sets: vec!["experiment.thetas=[3.0]".into()], ..Default::default() };
        let cfg = args.load().unwrap();
        assert_eq!(cfg.experiment.replicas, 321);
        assert_eq!(cfg.experiment.thetas, vec![3.0]);
        assert_eq!(cfg.experiment.nu.len(), 1);
    }

    #[test]
    fn bad_keys_are_rejected() {
        let args = ConfigArgs { sets: vec!["experiment.bogus=1".into()], ..Default::default() };
        assert!(args.load().is_err());
        let args = ConfigArgs { sets: vec!["noequals".into()], ..Default::default() };
        assert!(args.load().is_err());
    }
}
