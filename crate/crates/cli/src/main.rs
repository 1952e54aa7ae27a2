mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use oulab_core::backbone::{backbone_martingales, simulate_backbone};
use oulab_core::experiment::{
    run_backbone_suite, run_mass_law_suite, run_regime_experiment, run_variance_bridge, ExperimentReport, Sampler,
};
use oulab_core::particles::{advance_reconstructed, evaluate_functionals, simulate_superprocess, write_snapshot, ParticleSystem, SnapshotHeader};
use oulab_core::rng::{domain, stream};
use oulab_core::validation::{run_validation, ValidationOptions};
use oulab_core::variance::{fast_regime_bound_check, sigma_critical, sigma_critical_quadrature, sigma_slow, VarianceConfig};
use oulab_core::{Mechanism, MomentConfig, MomentEngine, Regime};
use serde_json::json;

use config::{ConfigArgs, SEED_ENV, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "oulab", version, about = "Moments, limit variances and Monte Carlo checks for the OU superprocess")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Process {
    Particles,
    Backbone,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    /// u_f^k of the superprocess
    U,
    /// u_f^k under the subcritical mechanism
    Ustar,
    /// V_f^k of the backbone
    V,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mech {
    Super,
    Sub,
}

impl From<Mech> for Mechanism {
    fn from(m: Mech) -> Self {
        match m {
            Mech::Super => Mechanism::Super,
            Mech::Sub => Mechanism::Sub,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one replica and print its functionals
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "particles")]
        process: Process,
        #[arg(long, value_enum, default_value = "super")]
        mechanism: Mech,
        /// Stream index of the replica
        #[arg(long, default_value_t = 0)]
        replica: u64,
        /// End time; defaults to the horizon
        #[arg(long)]
        t: Option<f64>,
        /// Write particle positions (JSON header line, then CSV)
        #[arg(long, value_name = "FILE")]
        positions: Option<PathBuf>,
        /// Write the backbone event log
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
    },
    /// Evaluate a moment functional at (x, t)
    Moments {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        k: usize,
        /// Comma-separated coordinates
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value = "u")]
        kind: Kind,
        /// Print orders 1..k instead of k alone
        #[arg(long)]
        all: bool,
    },
    /// Limit variance of the central limit theorem for the configured regime
    Variance {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Regime experiment: fluctuation triples and their verdicts
    Clt {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Total-mass laws, or the variance bridge with --bridge
    MassLaw {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        bridge: bool,
    },
    /// Backbone martingales against the limit law
    Backbone {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the acceptance criteria
    Validate {
        #[arg(long)]
        quick: bool,
        /// Comma-separated criterion numbers
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, env = SEED_ENV)]
        seed: Option<u64>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        /// Directory receiving validation.json
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Passed,
    Failed,
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn report(rep: ExperimentReport) -> Result<Outcome> {
    rep.persist()?;
    print_json(&rep)?;
    for v in rep.verdicts.iter().filter(|v| !v.passed) {
        eprintln!("FAIL {}: {}", v.name, v.detail);
    }
    Ok(if rep.passed() { Outcome::Passed } else { Outcome::Failed })
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("bad coordinate '{v}'"))).collect()
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate { cfg, process, mechanism, replica, t, positions, log } => {
            let cfg = cfg.load()?;
            let r = cfg.resolve()?;
            let e = &cfg.experiment;
            let t = t.unwrap_or(r.horizon);
            if !(t >= 0.0) {
                bail!("t must be non-negative");
            }
            match process {
                Process::Particles => {
                    let mut rng = stream(e.seed, domain::SIMULATION, replica);
                    let mech = mechanism.into();
                    let state = match e.sampler {
                        Sampler::Exact => simulate_superprocess(&r.nu, t, e.resolution, mech, &r.params, e.population_cap, &mut rng)?,
                        Sampler::Reconstructed => {
                            let start = ParticleSystem::discretize(&r.nu, e.resolution);
                            advance_reconstructed(&start, t, &r.params, mech, e.population_cap, &mut rng)?
                        }
                    };
                    if let Some(path) = positions {
                        let header = SnapshotHeader { t, n: e.resolution, mech, seed: e.seed, stream: replica };
                        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                        write_snapshot(&state, &header, BufWriter::new(f))?;
                    }
                    let fun = evaluate_functionals(&state, &r.f, &r.params);
                    print_json(&json!({
                        "process": "particles",
                        "t": t,
                        "seed": e.seed,
                        "replica": replica,
                        "count": state.count(),
                        "total_mass": state.total_mass(),
                        "integral_f": fun.integral_f,
                        "h": fun.h_value,
                    }))?;
                }
                Process::Backbone => {
                    let mut rng = stream(e.seed, domain::BACKBONE, replica);
                    let gamma = oulab_core::backbone::sample_backbone_start(&r.nu, &r.params, &mut rng);
                    let mut records = Vec::new();
                    let (state, _) = simulate_backbone(&gamma, t, &[], &r.params, e.population_cap, &mut rng, log.as_ref().map(|_| &mut records))?;
                    if let Some(path) = log {
                        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                        for rec in &records {
                            writeln!(w, "{}", rec.to_line())?;
                        }
                        w.flush()?;
                    }
                    let m = backbone_martingales(&state, &r.params);
                    print_json(&json!({
                        "process": "backbone",
                        "t": t,
                        "seed": e.seed,
                        "replica": replica,
                        "initial_atoms": gamma.atoms().len(),
                        "count": state.particles.len(),
                        "w": m.w,
                        "i": m.i,
                    }))?;
                }
            }
            Ok(Outcome::Passed)
        }
        Command::Moments { cfg, k, x, t, kind, all } => {
            let cfg = cfg.load()?;
            let r = cfg.resolve()?;
            let x = parse_point(&x)?;
            let engine = MomentEngine::new(r.params, MomentConfig::default());
            let mut results = match kind {
                Kind::U => engine.u_moments(&r.f, &x, t, k, Mechanism::Super)?,
                Kind::Ustar => engine.u_moments(&r.f, &x, t, k, Mechanism::Sub)?,
                Kind::V => engine.backbone_moments(&r.f, &x, t, k)?.1,
            };
            if all {
                print_json(&results)?;
            } else {
                print_json(&results.pop().ok_or_else(|| anyhow!("k must be at least 1"))?)?;
            }
            Ok(Outcome::Passed)
        }
        Command::Variance { cfg } => {
            let cfg = cfg.load()?;
            let r = cfg.resolve()?;
            let p = r.params;
            match p.regime() {
                Regime::Slow => print_json(&sigma_slow(&r.f, &p, &VarianceConfig::default())?)?,
                Regime::Critical => print_json(&json!({
                    "closed_form": sigma_critical(&r.f, &p)?,
                    "quadrature": sigma_critical_quadrature(&r.f, &p)?,
                }))?,
                Regime::Fast => {
                    let engine = MomentEngine::new(p, MomentConfig::default());
                    let xs: Vec<Vec<f64>> = [-1.0, 0.0, 1.0].iter().map(|v| vec![*v; p.dim]).collect();
                    let ts: Vec<f64> = (1..=8).map(|t| t as f64).collect();
                    print_json(&fast_regime_bound_check(&engine, &r.f, &xs, &ts)?)?;
                }
            }
            Ok(Outcome::Passed)
        }
        Command::Clt { cfg } => report(run_regime_experiment(&cfg.load()?)?),
        Command::MassLaw { cfg, bridge } => {
            let cfg = cfg.load()?;
            report(if bridge { run_variance_bridge(&cfg)? } else { run_mass_law_suite(&cfg)? })
        }
        Command::Backbone { cfg } => report(run_backbone_suite(&cfg.load()?)?),
        Command::Validate { quick, only, seed, workers, out } => {
            let mut opts = ValidationOptions { quick, only, ..Default::default() };
            if let Some(s) = seed {
                opts.seed = s;
            }
            if let Some(w) = workers {
                if w == 0 {
                    bail!("workers must be positive");
                }
                opts.workers = w;
            }
            if let Some(bad) = opts.only.iter().find(|id| !(1..=12).contains(*id)) {
                bail!("no criterion {bad}; criteria are numbered 1 to 12");
            }
            let results = run_validation(&opts, |r| {
                eprintln!("criterion {:>2} {:<26} {} [{:.1}s] {}", r.id, r.name, if r.passed { "PASS" } else { "FAIL" }, r.seconds, r.detail);
            })?;
            let doc = json!({ "quick": quick, "seed": opts.seed, "workers": opts.workers, "criteria": results });
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("validation.json"), format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
            }
            print_json(&doc)?;
            Ok(if results.iter().all(|r| r.passed) { Outcome::Passed } else { Outcome::Failed })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
