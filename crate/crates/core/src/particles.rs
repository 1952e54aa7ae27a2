//! Branching OU particle systems with particles of mass 1/n.
//!
//! Each particle branches at rate 2 beta n and is replaced by two particles
//! with probability (1 + alpha/(2 beta n))/2 (Super, minus for Sub), or by
//! none otherwise. Three exact samplers share this law:
//! [`advance_exact`] runs every event, [`advance_reconstructed`] draws the
//! configuration at one later time by following only the lineages that
//! survive to it, and [`advance_count`] jumps the particle count alone.

use std::io::Write;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AtomicMeasure, ModelParams, Polynomial, MAX_DIM};
use crate::moments::Mechanism;
use crate::quadrature::GaussLegendre;
use crate::semigroup::SemigroupAction;

/// Default population cap shared with the backbone simulator.
pub const DEFAULT_POPULATION_CAP: usize = 2_000_000;

/// Branching rates of the calibrated binary scheme.
#[derive(Clone, Copy, Debug)]
pub struct Rates {
    /// Total event rate per particle.
    pub event: f64,
    pub birth: f64,
    pub death: f64,
}

impl Rates {
    pub fn new(params: &ModelParams, n: usize, mech: Mechanism) -> Result<Rates> {
        if n == 0 {
            return Err(Error::InvalidParameter("resolution n must be >= 1".into()));
        }
        let event = 2.0 * params.beta * n as f64;
        if event <= params.alpha {
            return Err(Error::InvalidParameter(format!(
                "resolution n = {n} too small: need 2 beta n > alpha"
            )));
        }
        let a = mech.weight(params) / event;
        let split = 0.5 * (1.0 + a);
        Ok(Rates { event, birth: event * split, death: event * (1.0 - split) })
    }

    pub fn split_probability(&self) -> f64 {
        self.birth / self.event
    }

    /// Net growth rate birth - death.
    pub fn growth(&self) -> f64 {
        self.birth - self.death
    }

    /// Probability that one particle has descendants after time tau.
    pub fn survival(&self, tau: f64) -> f64 {
        let rho = self.growth();
        rho / (self.birth - self.death * (-rho * tau).exp())
    }
}

/// Particles of mass 1/n, positions synchronized at `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    n: usize,
    dim: usize,
    time: f64,
    positions: Vec<f64>,
}

impl ParticleSystem {
    /// floor(n * mass) particles at each atom of nu.
    pub fn discretize(nu: &AtomicMeasure, n: usize) -> ParticleSystem {
        let dim = nu.dim();
        let mut positions = Vec::new();
        for (x, m) in nu.atoms() {
            let k = (n as f64 * m).floor() as usize;
            for _ in 0..k {
                positions.extend_from_slice(x);
            }
        }
        ParticleSystem { n, dim, time: 0.0, positions }
    }

    pub fn from_positions(n: usize, dim: usize, time: f64, positions: Vec<f64>) -> ParticleSystem {
        assert_eq!(positions.len() % dim, 0);
        ParticleSystem { n, dim, time, positions }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn count(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn total_mass(&self) -> f64 {
        self.count() as f64 / self.n as f64
    }

    pub fn survived(&self) -> bool {
        self.count() > 0
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Sum of g over particles, divided by n.
    pub fn integrate(&self, g: &Polynomial) -> f64 {
        let s: f64 = self.positions.chunks_exact(self.dim).map(|x| g.eval(x)).sum();
        s / self.n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub mass: f64,
    pub integral_f: f64,
    /// e^{-(alpha - mu) t} <X_t, id>.
    pub h_value: Vec<f64>,
}

pub fn evaluate_functionals(state: &ParticleSystem, f: &Polynomial, params: &ModelParams) -> Functionals {
    let d = state.dim;
    let mut h = vec![0.0; d];
    for x in state.positions.chunks_exact(d) {
        for (hi, xi) in h.iter_mut().zip(x) {
            *hi += xi;
        }
    }
    let scale = (-(params.alpha - params.mu) * state.time).exp() / state.n as f64;
    Functionals {
        mass: state.total_mass(),
        integral_f: state.integrate(f),
        h_value: h.into_iter().map(|v| v * scale).collect(),
    }
}

/// Exact OU transition of one point over time dt, in place.
#[inline]
pub fn ou_step<R: Rng + ?Sized>(x: &mut [f64], dt: f64, params: &ModelParams, rng: &mut R) {
    if dt <= 0.0 {
        return;
    }
    let e = (-params.mu * dt).exp();
    let sd = params.bridge_variance(dt).sqrt();
    for xi in x.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *xi = *xi * e + sd * z;
    }
}

fn cap_error(cap: usize, time: f64, population: usize) -> Error {
    Error::PopulationCap { cap, time, population }
}

/// Runs every branching event from `state.time` to `t_end`.
pub fn advance_exact<R: Rng + ?Sized>(
    state: &mut ParticleSystem,
    t_end: f64,
    params: &ModelParams,
    mech: Mechanism,
    cap: usize,
    rng: &mut R,
) -> Result<()> {
    let rates = Rates::new(params, state.n, mech)?;
    if t_end < state.time {
        return Err(Error::InvalidParameter(format!("cannot run backwards to {t_end} from {}", state.time)));
    }
    let d = state.dim;
    let split = rates.split_probability();
    let mut last = vec![state.time; state.count()];
    let mut now = state.time;
    loop {
        let count = last.len();
        if count == 0 {
            break;
        }
        let e: f64 = rng.sample(Exp1);
        now += e / (count as f64 * rates.event);
        if now >= t_end {
            break;
        }
        let i = rng.random_range(0..count);
        let x = &mut state.positions[i * d..(i + 1) * d];
        ou_step(x, now - last[i], params, rng);
        last[i] = now;
        if rng.random::<f64>() < split {
            if count + 1 > cap {
                return Err(cap_error(cap, now, count + 1));
            }
            state.positions.extend_from_within(i * d..(i + 1) * d);
            last.push(now);
        } else {
            let j = count - 1;
            for k in 0..d {
                state.positions.swap(i * d + k, j * d + k);
            }
            state.positions.truncate(j * d);
            last.swap_remove(i);
        }
    }
    for (i, x) in state.positions.chunks_exact_mut(d).enumerate() {
        ou_step(x, t_end - last[i], params, rng);
    }
    state.time = t_end;
    Ok(())
}

/// Draws the configuration at `t_end` exactly in law, simulating only the
/// lineages that survive to `t_end`: each particle is kept with its survival
/// probability, and kept lineages split at rate birth * q(t_end - s), where
/// q(tau) is the survival probability over the remaining time.
///
/// Subtrees are independent, so they are generated depth first. Along a
/// lineage G(s) = birth e^{rho (t_end - s)} - death satisfies
/// P(no split in [s0, s1]) = G(s1) / G(s0), so the next split is where G
/// has dropped by an independent uniform factor.
pub fn advance_reconstructed<R: Rng + ?Sized>(
    state: &ParticleSystem,
    t_end: f64,
    params: &ModelParams,
    mech: Mechanism,
    cap: usize,
    rng: &mut R,
) -> Result<ParticleSystem> {
    let rates = Rates::new(params, state.n, mech)?;
    let t0 = state.time;
    if t_end < t0 {
        return Err(Error::InvalidParameter(format!("cannot run backwards to {t_end} from {t0}")));
    }
    let d = state.dim;
    let keep = rates.survival(t_end - t0);
    let (b, dr, rho) = (rates.birth, rates.death, rates.growth());
    let g_start = b * (rho * (t_end - t0)).exp() - dr;
    let var_inf = params.stationary_variance();
    let mut out: Vec<f64> = Vec::new();
    let mut stack: Vec<([f64; MAX_DIM], f64, f64)> = Vec::new();
    for x in state.positions.chunks_exact(d) {
        if rng.random::<f64>() >= keep {
            continue;
        }
        let mut p = [0.0; MAX_DIM];
        p[..d].copy_from_slice(x);
        stack.push((p, t0, g_start));
        while let Some((mut x, s, g)) = stack.pop() {
            let g1 = g * rng.random::<f64>();
            let s1 = if g1 / rho > 1.0 { t_end - ((g1 + dr) / b).ln() / rho } else { t_end };
            let s1 = s1.min(t_end);
            let dt = s1 - s;
            if dt > 0.0 {
                let e = (-params.mu * dt).exp();
                let sd = (var_inf * (1.0 - e * e)).sqrt();
                for xi in x.iter_mut().take(d) {
                    let z: f64 = rng.sample(StandardNormal);
                    *xi = *xi * e + sd * z;
                }
            }
            if s1 >= t_end {
                out.extend_from_slice(&x[..d]);
                continue;
            }
            if out.len() / d + stack.len() + 2 > cap {
                return Err(cap_error(cap, s1, out.len() / d + stack.len() + 2));
            }
            stack.push((x, s1, g1));
            stack.push((x, s1, g1));
        }
    }
    Ok(ParticleSystem { n: state.n, dim: d, time: t_end, positions: out })
}

/// Exact law of the particle count after time tau, started from `count`
/// particles: Binomial survivors, each with a geometric number of
/// descendants.
pub fn advance_count<R: Rng + ?Sized>(
    count: u64,
    tau: f64,
    n: usize,
    params: &ModelParams,
    mech: Mechanism,
    rng: &mut R,
) -> Result<u64> {
    let rates = Rates::new(params, n, mech)?;
    if count == 0 || tau <= 0.0 {
        return Ok(count);
    }
    let (b, dr, rho) = (rates.birth, rates.death, rates.growth());
    let em = (rho * tau).exp_m1();
    let denom = b * em + rho;
    let p0 = dr * em / denom;
    let eta = b * em / denom;
    let k = Binomial::new(count, (1.0 - p0).clamp(0.0, 1.0))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng);
    if k == 0 {
        return Ok(0);
    }
    let lam = Gamma::new(k as f64, eta / (1.0 - eta))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng);
    let extra = if lam > 0.0 {
        Poisson::new(lam).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(rng) as u64
    } else {
        0
    };
    Ok(k + extra)
}

/// Particle system started from nu and run to t_end with every event.
pub fn simulate_superprocess<R: Rng + ?Sized>(
    nu: &AtomicMeasure,
    t_end: f64,
    n: usize,
    mech: Mechanism,
    params: &ModelParams,
    cap: usize,
    rng: &mut R,
) -> Result<ParticleSystem> {
    if nu.dim() != params.dim {
        return Err(Error::DimensionMismatch { expected: params.dim, got: nu.dim() });
    }
    Rates::new(params, n, mech)?;
    let mut s = ParticleSystem::discretize(nu, n);
    if s.count() > cap {
        return Err(cap_error(cap, 0.0, s.count()));
    }
    advance_exact(&mut s, t_end, params, mech, cap, rng)?;
    Ok(s)
}

/// Gaussian approximation of <X_{t+tau}, g> given X_t, with the exact
/// conditional mean and variance of the particle system. Used where the
/// population at t + tau is too large to simulate.
pub struct GaussianClosure {
    pub tau: f64,
    /// Conditional mean of one particle's contribution, times n.
    mean: Polynomial,
    /// Conditional variance of one particle's contribution, times n^2.
    var: Polynomial,
}

impl GaussianClosure {
    pub fn new(g: &Polynomial, tau: f64, n: usize, mech: Mechanism, params: &ModelParams) -> Result<Self> {
        let rates = Rates::new(params, n, mech)?;
        let sg = SemigroupAction::new(*params);
        let a = mech.weight(params);
        let mean = sg.apply(g, tau, a)?;
        let s2 = params.sigma * params.sigma;
        let integrand = |s: f64| -> Result<Polynomial> {
            let h = sg.apply(g, tau - s, a)?;
            let mut q = h.mul(&h)?.scale(rates.event);
            for dh in h.gradient() {
                q.axpy_assign(s2, &dh.mul(&dh)?);
            }
            sg.apply(&q, s, a)
        };
        let var = integrate_polynomial(integrand, tau, 1e-13)?;
        Ok(GaussianClosure { tau, mean, var })
    }

    /// Conditional mean and variance of <X_{t+tau}, g> given the state at t.
    pub fn moments(&self, state: &ParticleSystem) -> (f64, f64) {
        let n = state.n as f64;
        (state.integrate(&self.mean), state.integrate(&self.var) / n)
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: &ParticleSystem, rng: &mut R) -> f64 {
        let (m, v) = self.moments(state);
        let z: f64 = rng.sample(StandardNormal);
        m + v.max(0.0).sqrt() * z
    }
}

/// Composite Gauss-Legendre integral over [0, tau] of a polynomial-valued
/// function, doubling the panel count until the coefficients settle.
fn integrate_polynomial(f: impl Fn(f64) -> Result<Polynomial>, tau: f64, rel: f64) -> Result<Polynomial> {
    let rule = GaussLegendre::new(10);
    let pass = |panels: usize| -> Result<Polynomial> {
        let h = tau / panels as f64;
        let mut acc: Option<Polynomial> = None;
        for p in 0..panels {
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let v = f(h * (p as f64 + x))?.scale(h * w);
                acc = Some(match acc {
                    None => v,
                    Some(a) => a.add(&v),
                });
            }
        }
        Ok(acc.expect("at least one node"))
    };
    let mut panels = 4;
    let mut prev = pass(panels)?;
    for _ in 0..10 {
        panels *= 2;
        let next = pass(panels)?;
        let diff = next.sub(&prev).max_abs_coeff();
        if diff <= rel * next.max_abs_coeff() {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature("closure variance integral did not settle".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub t: f64,
    pub n: usize,
    pub mech: Mechanism,
    pub seed: u64,
    pub stream: u64,
}

/// Writes a JSON header line followed by CSV rows particle_index,x1..xd.
pub fn write_snapshot<W: Write>(state: &ParticleSystem, header: &SnapshotHeader, mut w: W) -> Result<()> {
    let json = serde_json::to_string(header).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w, "# {json}")?;
    let cols: Vec<String> = (1..=state.dim).map(|i| format!("x{i}")).collect();
    writeln!(w, "particle_index,{}", cols.join(","))?;
    for (i, x) in state.positions.chunks_exact(state.dim).enumerate() {
        let vals: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{i},{}", vals.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};

    fn params() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, 1.0, 1).unwrap()
    }

    #[test]
    fn calibration_and_validation() {
        let p = params();
        let r = Rates::new(&p, 200, Mechanism::Super).unwrap();
        assert_eq!(r.event, 400.0);
        assert!((r.growth() - 1.0).abs() < 1e-12);
        let s = Rates::new(&p, 200, Mechanism::Sub).unwrap();
        assert!((s.growth() + 1.0).abs() < 1e-12);
        assert!(Rates::new(&ModelParams::new(1.0, 1.0, 3.0, 1.0, 1).unwrap(), 1, Mechanism::Super).is_err());
        assert!((r.survival(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_time_is_discretized_start() {
        let p = params();
        let nu = AtomicMeasure::new(1, vec![(vec![0.0], 1.0), (vec![2.0], 0.5051)]).unwrap();
        let mut rng = stream(1, domain::TEST, 0);
        let s = simulate_superprocess(&nu, 0.0, 100, Mechanism::Super, &p, DEFAULT_POPULATION_CAP, &mut rng).unwrap();
        assert_eq!(s.count(), 150);
        assert_eq!(s.total_mass(), 1.5);
        let f = Polynomial::constant(1, 1.0);
        let fx = evaluate_functionals(&s, &f, &p);
        assert!((fx.integral_f - fx.mass).abs() <= 1e-12 * fx.mass);
    }

    #[test]
    fn population_cap_is_reported() {
        let p = params();
        let mut rng = stream(2, domain::TEST, 0);
        let nu = AtomicMeasure::dirac(vec![0.0]);
        let err = simulate_superprocess(&nu, 5.0, 200, Mechanism::Super, &p, 300, &mut rng).unwrap_err();
        assert!(matches!(err, Error::PopulationCap { cap: 300, .. }));
    }

    #[test]
    fn empty_state_functionals() {
        let p = params();
        let s = ParticleSystem::from_positions(10, 1, 1.0, vec![]);
        let f = evaluate_functionals(&s, &Polynomial::parse("x", 1).unwrap(), &p);
        assert_eq!((f.mass, f.integral_f, f.h_value[0]), (0.0, 0.0, 0.0));
        assert!(!s.survived());
    }

    #[test]
    fn snapshot_format() {
        let s = ParticleSystem::from_positions(4, 2, 1.0, vec![0.5, -1.0, 2.0, 0.25]);
        let h = SnapshotHeader { t: 1.0, n: 4, mech: Mechanism::Super, seed: 7, stream: 3 };
        let mut buf = Vec::new();
        write_snapshot(&s, &h, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# {\"t\":1.0,\"n\":4,\"mech\":\"super\",\"seed\":7,\"stream\":3}");
        assert_eq!(lines[1], "particle_index,x1,x2");
        assert_eq!(lines[3], "1,2.0,0.25");
    }
}
