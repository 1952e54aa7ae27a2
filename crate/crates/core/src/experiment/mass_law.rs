use std::time::Instant;

use super::{put, put_moments, run_replicas, Builder, ExperimentConfig, ExperimentReport, Resolved, Sampler, Suite, Summary, Table};
use crate::error::{Error, Result};
use crate::moments::{extinction_probability, sample_v_infinity, total_mass_laplace, Mechanism, MomentConfig, MomentEngine};
use crate::particles::{advance_count, advance_exact, advance_reconstructed, ParticleSystem};
use crate::rng::{domain, stream};
use crate::stats::{ks_two_sample, mean, std_error_of_mean};
use crate::SemigroupAction;

fn simulate_to(
    cfg: &ExperimentConfig,
    r: &Resolved,
    initial: &ParticleSystem,
    t: f64,
    rng: &mut crate::rng::StreamRng,
) -> Result<ParticleSystem> {
    let e = &cfg.experiment;
    match e.sampler {
        Sampler::Exact => {
            let mut s = initial.clone();
            advance_exact(&mut s, t, &r.params, Mechanism::Super, e.population_cap, rng)?;
            Ok(s)
        }
        Sampler::Reconstructed => advance_reconstructed(initial, t, &r.params, Mechanism::Super, e.population_cap, rng),
    }
}

/// Total-mass laws: the Laplace transform at `laplace_time`, the
/// martingale e^{-at}|X_t| at `ks_time` against compound-Poisson limit
/// draws, and extinction by the horizon. Positions are simulated up to
/// `laplace_time`; later masses come from the exact count law.
pub fn run_mass_law_suite(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let r = cfg.resolve()?;
    let e = &cfg.experiment;
    let (t1, t2, t3) = (e.laplace_time, e.ks_time, r.horizon);
    if !(t1 <= t2 && t2 <= t3) {
        return Err(Error::InvalidParameter("need laplace_time <= ks_time <= horizon".into()));
    }
    let p = r.params;
    let n = e.resolution;
    let initial = ParticleSystem::discretize(&r.nu, n);
    let rows = run_replicas(e.replicas, e.workers, |id| {
        let mut rng = stream(e.seed, domain::SIMULATION, id);
        let s = simulate_to(cfg, &r, &initial, t1, &mut rng)?;
        let c2 = advance_count(s.count() as u64, t2 - t1, n, &p, Mechanism::Super, &mut rng)?;
        let c3 = advance_count(c2, t3 - t2, n, &p, Mechanism::Super, &mut rng)?;
        let m2 = c2 as f64 / n as f64;
        Ok(vec![id as f64, s.total_mass(), m2, (-p.alpha * t2).exp() * m2, (c3 == 0) as u8 as f64])
    })?;
    let table = Table { columns: ["replica_id", "mass_laplace", "mass_ks", "w_ks", "extinct"].iter().map(|s| s.to_string()).collect(), rows };
    let mut b = Builder::new(summarize(Suite::MassLaw, cfg, &table)?);
    for &theta in &e.thetas {
        let key = format!("laplace.{theta}");
        let (m, se, target) = (b.get(&format!("{key}.mean")), b.get(&format!("{key}.mean_se")), b.get(&format!("{key}.target")));
        b.verdict(
            &format!("laplace_theta_{theta}"),
            (m - target).abs() <= 4.0 * se,
            format!("E exp(-{theta}|X_{t1}|) = {m:.6} vs {target:.6}, 4 se = {:.6}", 4.0 * se),
        );
    }
    let (f, ex, se) = (b.get("extinct.fraction"), b.get("extinct.expected"), b.get("extinct.se"));
    b.verdict(
        "extinction",
        (f - ex).abs() <= 3.0 * se,
        format!("extinct fraction by t = {t3}: {f:.5} vs {ex:.5}, 3 se = {:.5}", 3.0 * se),
    );
    let (wm, wse, mass0) = (b.get("w_ks.mean"), b.get("w_ks.mean_se"), b.get("initial_mass"));
    b.verdict("martingale_mean", (wm - mass0).abs() <= 3.0 * wse, format!("E e^(-a t)|X_t| at t = {t2}: {wm:.5} vs {mass0}"));
    for which in ["all", "survivors"] {
        let pv = b.get(&format!("ks.{which}.p_value"));
        b.verdict(
            &format!("limit_law_{which}"),
            pv.is_nan() || pv >= 0.01,
            format!("two-sample KS vs limit draws ({which}): D = {:.5}, p = {pv:.4}", b.get(&format!("ks.{which}.statistic"))),
        );
    }
    Ok(b.finish(Suite::MassLaw, cfg, table, start))
}

/// Var<f, X_t> against -<nu, u_f^2(., t)> and E<f, X_t> against
/// <nu, P^a_t f>, at t = `laplace_time`.
pub fn run_variance_bridge(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let r = cfg.resolve()?;
    let e = &cfg.experiment;
    let t = e.laplace_time;
    let initial = ParticleSystem::discretize(&r.nu, e.resolution);
    let rows = run_replicas(e.replicas, e.workers, |id| {
        let mut rng = stream(e.seed, domain::SIMULATION, id);
        let s = simulate_to(cfg, &r, &initial, t, &mut rng)?;
        Ok(vec![id as f64, s.integrate(&r.f)])
    })?;
    let table = Table { columns: vec!["replica_id".into(), "integral_f".into()], rows };
    let mut b = Builder::new(summarize(Suite::VarianceBridge, cfg, &table)?);
    let (v, vse, vt) = (b.get("integral_f.var"), b.get("integral_f.var_se"), b.get("variance.target"));
    b.verdict("variance", (v - vt).abs() <= 4.0 * vse, format!("Var<f, X_{t}> = {v:.6} vs {vt:.6}, 4 se = {:.6}", 4.0 * vse));
    let (m, mse, mt) = (b.get("integral_f.mean"), b.get("integral_f.mean_se"), b.get("mean.target"));
    b.verdict("mean", (m - mt).abs() <= 4.0 * mse, format!("E<f, X_{t}> = {m:.6} vs {mt:.6}"));
    Ok(b.finish(Suite::VarianceBridge, cfg, table, start))
}

/// Compound-Poisson limit draws for the suite; reproducible from the seed.
pub(crate) fn limit_draws(cfg: &ExperimentConfig, mass: f64, p: &crate::ModelParams) -> Vec<f64> {
    let mut rng = stream(cfg.experiment.seed, domain::LIMIT_DRAWS, 0);
    (0..cfg.experiment.limit_draws).map(|_| sample_v_infinity(mass, p, &mut rng)).collect()
}

pub(super) fn summarize(suite: Suite, cfg: &ExperimentConfig, rows: &Table) -> Result<Summary> {
    let r = cfg.resolve()?;
    let p = r.params;
    let e = &cfg.experiment;
    let mut s = Summary::new();
    // The particle system starts from the discretized measure.
    let start = ParticleSystem::discretize(&r.nu, e.resolution);
    let mass0 = start.total_mass();
    put(&mut s, "replicas", rows.len() as f64);
    put(&mut s, "initial_mass", mass0);
    if suite == Suite::VarianceBridge {
        let x = rows.column("integral_f")?;
        put_moments(&mut s, "integral_f", &x);
        let engine = MomentEngine::new(p, MomentConfig::default());
        let sg = SemigroupAction::new(p);
        let mean_poly = sg.apply(&r.f, e.laplace_time, p.alpha)?;
        let (mut var, mut err, mut m) = (0.0, 0.0, 0.0);
        for (x, mass) in r.nu.atoms() {
            let w = (e.resolution as f64 * mass).floor() / e.resolution as f64;
            if w == 0.0 {
                continue;
            }
            let u2 = engine.u_moment(&r.f, x, e.laplace_time, 2, Mechanism::Super)?;
            var -= w * u2.value;
            err += w * u2.abs_error_estimate;
            m += w * mean_poly.eval(x);
        }
        put(&mut s, "variance.target", var);
        put(&mut s, "variance.target_error", err);
        put(&mut s, "mean.target", m);
        return Ok(s);
    }
    let ml = rows.column("mass_laplace")?;
    for &theta in &e.thetas {
        let v: Vec<f64> = ml.iter().map(|m| (-theta * m).exp()).collect();
        let key = format!("laplace.{theta}");
        put(&mut s, format!("{key}.mean"), mean(&v));
        put(&mut s, format!("{key}.mean_se"), std_error_of_mean(&v));
        put(&mut s, format!("{key}.target"), (-mass0 * total_mass_laplace(theta, e.laplace_time, &p)).exp());
    }
    let ext = rows.column("extinct")?;
    let pe = extinction_probability(mass0, &p);
    put(&mut s, "extinct.fraction", mean(&ext));
    put(&mut s, "extinct.expected", pe);
    put(&mut s, "extinct.se", (pe * (1.0 - pe) / ext.len() as f64).sqrt());
    let w = rows.column("w_ks")?;
    put_moments(&mut s, "w_ks", &w);
    let draws = limit_draws(cfg, mass0, &p);
    let ks = ks_two_sample(&w, &draws);
    put(&mut s, "ks.all.statistic", ks.statistic);
    put(&mut s, "ks.all.p_value", ks.p_value);
    let ws: Vec<f64> = w.iter().copied().filter(|v| *v > 0.0).collect();
    let ds: Vec<f64> = draws.iter().copied().filter(|v| *v > 0.0).collect();
    if !ws.is_empty() && !ds.is_empty() {
        let ks = ks_two_sample(&ws, &ds);
        put(&mut s, "ks.survivors.statistic", ks.statistic);
        put(&mut s, "ks.survivors.p_value", ks.p_value);
    }
    Ok(s)
}
