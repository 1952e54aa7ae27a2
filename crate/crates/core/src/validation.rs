//! The twelve acceptance criteria as runnable checks, at full scale or
//! in a reduced `quick` form.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::{
    run_backbone_suite, run_mass_law_suite, run_regime_experiment, run_variance_bridge, ExperimentConfig, ExperimentReport,
    ModelSpec, Sampler,
};
use crate::model::{ModelParams, Polynomial, Regime};
use crate::moments::{Mechanism, MomentConfig, MomentEngine};
use crate::variance::{critical_asymptote, sigma_critical, sigma_critical_quadrature, sigma_slow, slow_asymptote, VarianceConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ValidationOptions {
    pub quick: bool,
    pub seed: u64,
    pub workers: usize,
    /// Criteria to run; empty means all.
    pub only: Vec<u8>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            quick: false,
            seed: 20240611,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            only: Vec::new(),
        }
    }
}

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "laplace_oracle"),
    (2, "extinction_probability"),
    (3, "moment_identity"),
    (4, "variance_bridge"),
    (5, "critical_closed_form"),
    (6, "second_moment_asymptotes"),
    (7, "slow_clt"),
    (8, "critical_clt"),
    (9, "fast_convergence"),
    (10, "backbone_limit_law"),
    (11, "independence"),
    (12, "determinism"),
];

fn model(sigma: f64, mu: f64, alpha: Option<f64>, beta: f64) -> ModelSpec {
    ModelSpec { sigma, mu, alpha, beta, dim: 1 }
}

struct Sizes {
    mass_r: usize,
    mass_n: usize,
    bridge_r: usize,
    bridge_n: usize,
    slow_r: usize,
    slow_n: usize,
    crit_r: usize,
    fast_r: usize,
    backbone_r: usize,
    draws: usize,
}

impl Sizes {
    fn new(quick: bool) -> Sizes {
        if quick {
            Sizes {
                mass_r: 1000,
                mass_n: 100,
                bridge_r: 2000,
                bridge_n: 100,
                slow_r: 500,
                slow_n: 50,
                crit_r: 500,
                fast_r: 200,
                backbone_r: 2000,
                draws: 4000,
            }
        } else {
            Sizes {
                mass_r: 5000,
                mass_n: 200,
                bridge_r: 10_000,
                bridge_n: 200,
                slow_r: 5000,
                slow_n: 200,
                crit_r: 5000,
                fast_r: 1000,
                backbone_r: 10_000,
                draws: 10_000,
            }
        }
    }
}

/// Experiment configs behind the simulation criteria.
pub struct Configs {
    pub mass_law: ExperimentConfig,
    pub bridge: ExperimentConfig,
    pub slow: ExperimentConfig,
    pub critical: ExperimentConfig,
    pub fast_cubic: ExperimentConfig,
    pub fast_linear: ExperimentConfig,
    pub backbone: ExperimentConfig,
}

impl Configs {
    pub fn new(opts: &ValidationOptions) -> Configs {
        let z = Sizes::new(opts.quick);
        let common = |c: &mut ExperimentConfig| {
            c.experiment.seed = opts.seed;
            c.experiment.workers = opts.workers;
            c.experiment.limit_draws = z.draws;
            c.experiment.population_cap = 100_000_000;
        };
        let unit = model(1.0, 1.0, Some(1.0), 1.0);

        let mut mass_law = ExperimentConfig::new(unit.clone(), 15.0, z.mass_n, z.mass_r);
        mass_law.experiment.sampler = Sampler::Exact;
        mass_law.experiment.laplace_time = 1.0;
        mass_law.experiment.ks_time = 10.0;
        common(&mut mass_law);

        let mut bridge = ExperimentConfig::new(unit.clone(), 1.0, z.bridge_n, z.bridge_r);
        bridge.experiment.sampler = Sampler::Exact;
        common(&mut bridge);

        let mut slow = ExperimentConfig::new(model(1.0, 1.0, Some(1.0), 0.5), 16.0, z.slow_n, z.slow_r);
        slow.experiment.regime = Some(Regime::Slow);
        slow.experiment.checkpoint = Some(8.0);
        common(&mut slow);

        // Critical growth is e^{2t}; t = 5 with n = 20 keeps a replica
        // near 10^6 particles.
        let mut critical = ExperimentConfig::new(model(1.0, 1.0, None, 1.0), 10.0, 20, z.crit_r);
        critical.experiment.regime = Some(Regime::Critical);
        critical.experiment.checkpoint = Some(5.0);
        common(&mut critical);

        let mut fast_cubic = ExperimentConfig::new(model(1.0, 1.0, Some(3.0), 1.0), 8.0, 2, z.fast_r);
        fast_cubic.experiment.regime = Some(Regime::Fast);
        fast_cubic.experiment.checkpoint = Some(4.0);
        fast_cubic.experiment.f = "x^3".into();
        common(&mut fast_cubic);
        let mut fast_linear = fast_cubic.clone();
        fast_linear.experiment.f = "x".into();

        let mut backbone = ExperimentConfig::new(unit, 10.0, 1, z.backbone_r);
        backbone.experiment.observe = vec![2.0, 5.0, 10.0];
        common(&mut backbone);

        Configs { mass_law, bridge, slow, critical, fast_cubic, fast_linear, backbone }
    }
}

fn verdict<'a>(rep: &'a ExperimentReport, name: &str) -> (bool, &'a str) {
    rep.verdicts
        .iter()
        .find(|v| v.name == name)
        .map_or((false, "verdict missing"), |v| (v.passed, v.detail.as_str()))
}

fn all_of(rep: &ExperimentReport, names: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in names {
        let (p, d) = verdict(rep, n);
        ok &= p;
        parts.push(d.to_string());
    }
    (ok, parts.join("; "))
}

fn moment_identity() -> Result<(bool, String)> {
    let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1)?;
    let eng = MomentEngine::new(p, MomentConfig::default());
    let ratio = p.alpha / p.beta;
    let (mut worst1, mut worst_k, mut worst_budget) = (0.0f64, 0.0f64, 0.0f64);
    let mut ok = true;
    for f in ["x", "x^2 - 0.5"] {
        let f = Polynomial::parse(f, 1)?;
        for x in [0.0, 1.0] {
            for t in [0.5, 1.0, 2.0] {
                let u = eng.u_moments(&f, &[x], t, 4, Mechanism::Super)?;
                let (us, v) = eng.backbone_moments(&f, &[x], t, 4)?;
                for k in 0..4 {
                    let gap = (u[k].value - (us[k].value - ratio * v[k].value)).abs();
                    if k == 0 {
                        worst1 = worst1.max(gap);
                        ok &= gap <= 1e-12 * u[0].value.abs().max(1.0);
                    } else {
                        let budget = u[k].abs_error_estimate + us[k].abs_error_estimate + ratio * v[k].abs_error_estimate;
                        worst_k = worst_k.max(gap);
                        worst_budget = worst_budget.max(budget);
                        ok &= gap <= budget && budget <= 1e-6;
                    }
                }
            }
        }
    }
    Ok((ok, format!("k = 1 max gap {worst1:.2e}; k >= 2 max gap {worst_k:.2e}, max error budget {worst_budget:.2e}")))
}

fn critical_closed_form() -> Result<(bool, String)> {
    let p = ModelParams::critical(1.0, 1.0, 1.0, 1)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for f in ["x", "x^3"] {
        let g = Polynomial::parse(f, 1)?;
        let a = sigma_critical(&g, &p)?.sigma_sq;
        let b = sigma_critical_quadrature(&g, &p)?.sigma_sq;
        let rel = (a - b).abs() / a.abs();
        ok &= rel < 1e-8;
        parts.push(format!("{f}: {a:.12} vs {b:.12}, rel {rel:.1e}"));
    }
    Ok((ok, parts.join("; ")))
}

fn asymptotes() -> Result<(bool, String)> {
    let f = Polynomial::parse("x", 1)?;
    let times = [6.0, 9.0, 12.0];
    let check = |p: ModelParams, target: f64, tol: f64, critical: bool| -> Result<(bool, String)> {
        let eng = MomentEngine::new(p, MomentConfig::default());
        let mut gaps = Vec::new();
        for t in times {
            let v = if critical { critical_asymptote(&eng, &f, &[0.0], t)? } else { slow_asymptote(&eng, &f, &[0.0], t)? };
            gaps.push((v - target).abs() / target);
        }
        let ok = gaps[2] <= tol && gaps.windows(2).all(|w| w[1] < w[0]);
        let shown: Vec<String> = gaps.iter().map(|g| format!("{:.3}%", 100.0 * g)).collect();
        Ok((ok, format!("relative gaps {} (tolerance {}%)", shown.join(", "), 100.0 * tol)))
    };
    let slow = ModelParams::new(1.0, 1.0, 1.0, 0.5, 1)?;
    let crit = ModelParams::critical(1.0, 1.0, 1.0, 1)?;
    let (a, da) = check(slow, sigma_slow(&f, &slow, &VarianceConfig::default())?.sigma_sq, 0.02, false)?;
    let (b, db) = check(crit, sigma_critical(&f, &crit)?.sigma_sq, 0.05, true)?;
    Ok((a && b, format!("slow: {da}; critical: {db}")))
}

fn clt_detail(rep: &ExperimentReport) -> String {
    let (_, var) = verdict(rep, "limit_variance");
    let (_, ks) = verdict(rep, "normality");
    let (_, bb) = verdict(rep, "limit_variance_backbone");
    format!("{var}; {ks}; [diagnostic] {bb}")
}

/// Re-runs reduced copies of the simulation criteria with 1, 4 and 8
/// workers and compares the serialized rows byte for byte.
fn determinism(configs: &Configs) -> Result<(bool, String)> {
    let shrink = |c: &ExperimentConfig, r: usize, n: usize| {
        let mut c = c.clone();
        c.experiment.replicas = r;
        c.experiment.resolution = c.experiment.resolution.min(n);
        c.experiment.limit_draws = 500;
        c
    };
    type Runner = fn(&ExperimentConfig) -> Result<ExperimentReport>;
    let cases: Vec<(&str, Runner, ExperimentConfig)> = vec![
        ("mass_law", run_mass_law_suite, shrink(&configs.mass_law, 200, 50)),
        ("variance_bridge", run_variance_bridge, shrink(&configs.bridge, 200, 50)),
        ("slow", run_regime_experiment, shrink(&configs.slow, 200, 5)),
        ("critical", run_regime_experiment, shrink(&configs.critical, 100, 2)),
        ("fast", run_regime_experiment, shrink(&configs.fast_cubic, 100, 2)),
        ("backbone", run_backbone_suite, shrink(&configs.backbone, 200, 1)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, run, cfg) in cases {
        let mut reference: Option<Vec<u8>> = None;
        let mut same = true;
        for workers in [1, 4, 8] {
            let mut c = cfg.clone();
            c.experiment.workers = workers;
            let mut bytes = Vec::new();
            run(&c)?.rows.write_csv(&mut bytes)?;
            match &reference {
                None => reference = Some(bytes),
                Some(r) => same &= *r == bytes,
            }
        }
        ok &= same;
        parts.push(format!("{name} {}", if same { "identical" } else { "DIFFERS" }));
    }
    Ok((ok, parts.join(", ")))
}

/// Runs the selected criteria in order, reporting each one to `sink` as
/// soon as it is decided.
pub fn run_validation(opts: &ValidationOptions, mut sink: impl FnMut(&CriterionResult)) -> Result<Vec<CriterionResult>> {
    let configs = Configs::new(opts);
    let wanted = |id: u8| opts.only.is_empty() || opts.only.contains(&id);
    let mut out = Vec::new();
    let mut emit = |id: u8, start: Instant, (passed, detail): (bool, String)| {
        let r = CriterionResult { id, name: CRITERIA[id as usize - 1].1.to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() };
        sink(&r);
        out.push(r);
    };

    if wanted(1) || wanted(2) {
        let start = Instant::now();
        let rep = run_mass_law_suite(&configs.mass_law)?;
        if wanted(1) {
            let names: Vec<String> = configs.mass_law.experiment.thetas.iter().map(|t| format!("laplace_theta_{t}")).collect();
            let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            emit(1, start, all_of(&rep, &names));
        }
        if wanted(2) {
            emit(2, start, all_of(&rep, &["extinction"]));
        }
    }
    if wanted(3) {
        let start = Instant::now();
        emit(3, start, moment_identity()?);
    }
    if wanted(4) {
        let start = Instant::now();
        emit(4, start, all_of(&run_variance_bridge(&configs.bridge)?, &["variance"]));
    }
    if wanted(5) {
        let start = Instant::now();
        emit(5, start, critical_closed_form()?);
    }
    if wanted(6) {
        let start = Instant::now();
        emit(6, start, asymptotes()?);
    }
    let independence = ["independence_c1_c2", "independence_c1_c3", "independence_c2_c3"];
    let mut clt_reports = Vec::new();
    for (id, cfg) in [(7u8, &configs.slow), (8, &configs.critical)] {
        if wanted(id) || wanted(11) {
            let start = Instant::now();
            let rep = run_regime_experiment(cfg)?;
            if wanted(id) {
                let (ok, _) = all_of(&rep, &["limit_variance", "normality"]);
                emit(id, start, (ok, clt_detail(&rep)));
            }
            clt_reports.push((id, rep));
        }
    }
    if wanted(9) {
        let start = Instant::now();
        let cubic = run_regime_experiment(&configs.fast_cubic)?;
        let linear = run_regime_experiment(&configs.fast_linear)?;
        let (a, da) = all_of(&cubic, &["residual_decay"]);
        let (b, db) = all_of(&linear, &["residual_decay"]);
        emit(9, start, (a && b, format!("f = x^3: {da}; f = x: {db}")));
    }
    if wanted(10) {
        let start = Instant::now();
        emit(10, start, all_of(&run_backbone_suite(&configs.backbone)?, &["limit_law"]));
    }
    if wanted(11) {
        let start = Instant::now();
        let mut ok = true;
        let mut parts = Vec::new();
        for (id, rep) in &clt_reports {
            let (p, d) = all_of(rep, &independence);
            ok &= p;
            parts.push(format!("criterion {id} run: {d}"));
        }
        emit(11, start, (ok, parts.join("; ")));
    }
    if wanted(12) {
        let start = Instant::now();
        emit(12, start, determinism(&configs)?);
    }
    Ok(out)
}
