use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::mass_law::limit_draws;
use super::{put, put_moments, run_replicas, Builder, ExperimentConfig, ExperimentReport, Suite, Summary, Table};
use crate::backbone::{backbone_martingale_path, sample_backbone_start};
use crate::error::Result;
use crate::model::{AtomicMeasure, Regime};
use crate::rng::{domain, stream};
use crate::stats::{correlation, ks_two_sample};

fn w_col(t: f64) -> String {
    format!("w_t{t}")
}

fn columns(cfg: &ExperimentConfig, dim: usize) -> Vec<String> {
    let mut c = vec!["replica_id".to_string(), "atoms".into()];
    c.extend(cfg.experiment.observe.iter().map(|t| w_col(*t)));
    c.push("w_horizon".into());
    c.extend((1..=dim).map(|j| format!("i{j}_horizon")));
    c
}

/// Backbone replicas started from Poisson(alpha/beta |nu|) atoms placed
/// by nu / |nu|. Records W at the observation times and (W, I) at the
/// horizon. In the fast regime a second batch from a single atom at 0
/// tabulates the pairs (I, W) used to rebuild the Poisson-started law.
pub fn run_backbone_suite(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let r = cfg.resolve()?;
    let e = &cfg.experiment;
    let p = r.params;
    let horizon = r.horizon;
    let mut observe: Vec<f64> = e.observe.iter().copied().filter(|t| *t <= horizon).collect();
    if observe.len() != e.observe.len() {
        return Err(crate::Error::InvalidParameter("observation times must not exceed the horizon".into()));
    }
    observe.push(horizon);
    let fast = p.regime() == Regime::Fast;
    let run = |gamma: &AtomicMeasure, rng: &mut crate::rng::StreamRng| backbone_martingale_path(gamma, &observe, &p, e.population_cap, rng);
    let mut rows = run_replicas(e.replicas, e.workers, |id| {
        let mut rng = stream(e.seed, domain::BACKBONE, id);
        let gamma = sample_backbone_start(&r.nu, &p, &mut rng);
        let obs = run(&gamma, &mut rng)?;
        let mut row = vec![id as f64, gamma.atoms().len() as f64];
        row.extend(obs.iter().map(|o| o.w));
        row.extend_from_slice(&obs.last().expect("horizon observed").i);
        Ok(row)
    })?;
    let mut columns = columns(cfg, p.dim);
    if fast {
        // Rows carry the tabulated single-atom pair in extra columns.
        let origin = AtomicMeasure::dirac(vec![0.0; p.dim]);
        let pairs = run_replicas(e.replicas, e.workers, |id| {
            let mut rng = stream(e.seed, domain::BACKBONE, e.replicas as u64 + id);
            let obs = run(&origin, &mut rng)?;
            let last = obs.last().expect("horizon observed");
            let mut v = vec![last.w];
            v.extend_from_slice(&last.i);
            Ok(v)
        })?;
        for (row, pair) in rows.iter_mut().zip(pairs) {
            row.extend(pair);
        }
        columns.push("origin_w".into());
        columns.extend((1..=p.dim).map(|j| format!("origin_i{j}")));
    }
    let table = Table { columns, rows };
    let mut b = Builder::new(summarize(cfg, &table)?);
    let expected = b.get("w.expected");
    for t in &e.observe {
        let (m, se) = (b.get(&format!("{}.mean", w_col(*t))), b.get(&format!("{}.mean_se", w_col(*t))));
        b.verdict(
            &format!("w_mean_t{t}"),
            (m - expected).abs() <= 3.0 * se,
            format!("E W_{t} = {m:.5} vs {expected:.5}, 3 se = {:.5}", 3.0 * se),
        );
    }
    let (m, se, mass) = (b.get("v_horizon.mean"), b.get("v_horizon.mean_se"), r.nu.total_mass());
    b.verdict(
        "limit_mean",
        (m - mass).abs() <= 3.0 * se || (se == 0.0 && m == mass) || (mass == 0.0 && m == 0.0),
        format!("E (beta/alpha) W_{horizon} = {m:.5} vs |nu| = {mass}"),
    );
    let pv = b.get("ks.p_value");
    b.verdict(
        "limit_law",
        pv.is_nan() || pv >= 0.01,
        format!("two-sample KS of (beta/alpha) W_{horizon} vs limit draws: D = {:.5}, p = {pv:.4}", b.get("ks.statistic")),
    );
    if fast {
        for j in 1..=p.dim {
            let (c, chat, bound) =
                (b.get(&format!("corr_i{j}_w")), b.get(&format!("corr_i{j}_w.rebuilt")), b.get("corr_bound"));
            b.verdict(
                &format!("representation_i{j}"),
                c.is_nan() || chat.is_nan() || (c - chat).abs() <= bound,
                format!("corr(I{j}, W) = {c:.4}, rebuilt from single-atom runs {chat:.4}, bound {bound:.4}"),
            );
        }
    }
    Ok(b.finish(Suite::Backbone, cfg, table, start))
}

pub(super) fn summarize(cfg: &ExperimentConfig, rows: &Table) -> Result<Summary> {
    let r = cfg.resolve()?;
    let p = r.params;
    let mut s = Summary::new();
    let mass = r.nu.total_mass();
    let ratio = p.beta / p.alpha;
    put(&mut s, "replicas", rows.len() as f64);
    put(&mut s, "w.expected", p.lambda_star() * mass);
    for t in &cfg.experiment.observe {
        put_moments(&mut s, &w_col(*t), &rows.column(&w_col(*t))?);
    }
    let v: Vec<f64> = rows.column("w_horizon")?.iter().map(|w| ratio * w).collect();
    put_moments(&mut s, "v_horizon", &v);
    let draws = limit_draws(cfg, mass, &p);
    let ks = ks_two_sample(&v, &draws);
    put(&mut s, "ks.statistic", ks.statistic);
    put(&mut s, "ks.p_value", ks.p_value);
    if p.regime() == Regime::Fast {
        let w = rows.column("w_horizon")?;
        let n = rows.len();
        put(&mut s, "corr_bound", 4.0 * (2.0 / n as f64).sqrt());
        // Rebuild (I, W) as sums over Poisson atoms x_i of
        // (J_i + x_i E_i, E_i), with (J_i, E_i) drawn from the table.
        let ow = rows.column("origin_w")?;
        let mut rng = stream(cfg.experiment.seed, domain::BACKBONE, u64::MAX);
        let lam = p.lambda_star() * mass;
        let pois = (lam > 0.0).then(|| Poisson::new(lam).expect("finite mean"));
        let oi: Vec<Vec<f64>> = (1..=p.dim).map(|j| rows.column(&format!("origin_i{j}"))).collect::<Result<_>>()?;
        let mut wh = Vec::with_capacity(n);
        let mut ih = vec![Vec::with_capacity(n); p.dim];
        for _ in 0..n {
            let k = pois.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
            let gamma = sample_positions(&r.nu, k, &mut rng);
            let mut wsum = 0.0;
            let mut isum = vec![0.0; p.dim];
            for x in gamma {
                let idx = rng.random_range(0..n);
                wsum += ow[idx];
                for j in 0..p.dim {
                    isum[j] += oi[j][idx] + x[j] * ow[idx];
                }
            }
            wh.push(wsum);
            for j in 0..p.dim {
                ih[j].push(isum[j]);
            }
        }
        for j in 1..=p.dim {
            put(&mut s, format!("corr_i{j}_w"), correlation(&rows.column(&format!("i{j}_horizon"))?, &w));
            put(&mut s, format!("corr_i{j}_w.rebuilt"), correlation(&ih[j - 1], &wh));
        }
    }
    Ok(s)
}

fn sample_positions<R: Rng>(nu: &AtomicMeasure, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let total = nu.total_mass();
    (0..k)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            for (x, m) in nu.atoms() {
                if u < *m {
                    return x.clone();
                }
                u -= m;
            }
            nu.atoms().last().expect("k > 0 needs atoms").0.clone()
        })
        .collect()
}
