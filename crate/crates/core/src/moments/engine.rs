use crate::error::{Error, Result};
use crate::model::{ModelParams, Polynomial};
use crate::moments::{reduced_terms, Mechanism, MomentKind, MomentResult, PartitionTerm};
use crate::quadrature::GaussLegendre;
use crate::semigroup::{abs_bound, SemigroupAction};

/// Time-quadrature settings for the moment recursions.
#[derive(Clone, Copy, Debug)]
pub struct MomentConfig {
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Initial panel width.
    pub base_step: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of bisections of a base panel.
    pub max_depth: usize,
}

impl Default for MomentConfig {
    fn default() -> Self {
        MomentConfig { order: 8, base_step: 0.5, abs_tol: 1e-8, rel_tol: 1e-11, max_depth: 12 }
    }
}

/// Relative rounding allowance added to every quadrature error estimate.
const ROUNDING: f64 = 1e-12;

enum Closed {
    /// e^{a r} P_r f.
    Semigroup(f64),
    /// -2 (beta/alpha) sinh(alpha r) P_r f.
    BackboneMean,
}

enum Integrand {
    /// Bracket of the u^k recursion for a mechanism; `family[j]` holds u^{j+1}.
    U { mech: Mechanism, terms: Vec<PartitionTerm>, family: Vec<usize> },
    /// Bracket of the V^k recursion; `ustar[j]` holds u*^{j+1}, `v[j]` holds V^{j+1}.
    V { k: usize, terms: Vec<PartitionTerm>, ustar: Vec<usize>, v: Vec<usize> },
}

enum Kind {
    Closed(Closed),
    Integral { scale: f64, integrand: Integrand },
}

struct Component {
    weight: f64,
    depth: usize,
    kind: Kind,
}

/// A triangular system of polynomial-valued time integrals. Component c at
/// time s is P^{a_c}_s applied to an initial value plus
/// scale_c * int_0^s P^{a_c}_{s-r}[bracket_c(r)] dr, where the bracket only
/// reads components of smaller depth.
struct System<'a> {
    engine: &'a MomentEngine,
    f: &'a Polynomial,
    comps: Vec<Component>,
}

impl System<'_> {
    fn max_depth(&self) -> usize {
        self.comps.iter().map(|c| c.depth).max().unwrap_or(0)
    }

    fn closed(&self, c: &Closed, r: f64) -> Result<Polynomial> {
        let p = self.engine.params();
        match c {
            Closed::Semigroup(a) => self.engine.sg.apply(self.f, r, *a),
            Closed::BackboneMean => {
                let s = -2.0 * (p.beta / p.alpha) * (p.alpha * r).sinh();
                Ok(self.engine.sg.apply(self.f, r, 0.0)?.scale(s))
            }
        }
    }

    fn initial(&self) -> Result<Vec<Polynomial>> {
        self.comps
            .iter()
            .map(|c| match &c.kind {
                Kind::Closed(cl) => self.closed(cl, 0.0),
                Kind::Integral { .. } => Ok(Polynomial::zero(self.f.dim())),
            })
            .collect()
    }

    fn bracket(&self, ig: &Integrand, r: f64, st: &[Polynomial]) -> Result<Polynomial> {
        let p = self.engine.params();
        let dim = self.f.dim();
        match ig {
            Integrand::U { mech, terms, family } => {
                let mut acc = Polynomial::zero(dim);
                for t in terms {
                    let d = mech.derivative(t.order(), 0.0, p);
                    if d != 0.0 {
                        let prod = product(dim, &t.m, |j| &st[family[j]])?;
                        acc.axpy_assign(t.coeff * d, &prod);
                    }
                }
                Ok(acc)
            }
            Integrand::V { k, terms, ustar, v } => {
                let lam = -p.alpha / p.beta;
                let w: Vec<Polynomial> = if *k == 2 {
                    vec![self.engine.sg.apply(self.f, r, p.alpha)?]
                } else {
                    (0..k - 1).map(|j| st[ustar[j]].axpy(-p.alpha / p.beta, &st[v[j]])).collect()
                };
                let mut acc = st[ustar[k - 1]].scale(-2.0 * p.alpha);
                for t in terms {
                    let d_shift = Mechanism::Sub.derivative(t.order(), lam, p);
                    let d_zero = Mechanism::Sub.derivative(t.order(), 0.0, p);
                    if d_shift != 0.0 {
                        acc.axpy_assign(t.coeff * d_shift, &product(dim, &t.m, |j| &w[j])?);
                    }
                    if d_zero != 0.0 {
                        acc.axpy_assign(-t.coeff * d_zero, &product(dim, &t.m, |j| &st[ustar[j]])?);
                    }
                }
                Ok(acc)
            }
        }
    }

    /// All components of depth <= `depth` at time s0 + h, from the state at s0.
    fn advance(&self, st0: &[Polynomial], s0: f64, h: f64, depth: usize) -> Result<Vec<Polynomial>> {
        let rule = &self.engine.rule;
        let dim = self.f.dim();
        let mut out = vec![Polynomial::zero(dim); self.comps.len()];
        for (i, c) in self.comps.iter().enumerate() {
            if let Kind::Closed(cl) = &c.kind {
                out[i] = self.closed(cl, s0 + h)?;
            }
        }
        if depth == 0 {
            return Ok(out);
        }
        let mut inner = Vec::with_capacity(rule.nodes.len());
        for xi in &rule.nodes {
            inner.push(self.advance(st0, s0, h * xi, depth - 1)?);
        }
        for (i, c) in self.comps.iter().enumerate() {
            let Kind::Integral { scale, integrand } = &c.kind else { continue };
            if c.depth > depth {
                continue;
            }
            let sg = &self.engine.sg;
            let mut acc = sg.apply(&st0[i], h, c.weight)?;
            for (j, (xi, wj)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                let b = self.bracket(integrand, s0 + h * xi, &inner[j])?;
                let moved = sg.apply(&b, h * (1.0 - xi), c.weight)?;
                acc.axpy_assign(scale * h * wj, &moved);
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// March from 0 to t. Returns the final state and, for each component,
    /// an estimate of the absolute error of its value at x.
    fn solve(&self, x: &[f64], t: f64) -> Result<(Vec<Polynomial>, Vec<f64>)> {
        let cfg = &self.engine.cfg;
        let mut state = self.initial()?;
        let mut err = vec![0.0; self.comps.len()];
        if t == 0.0 {
            return Ok((state, err));
        }
        let depth = self.max_depth();
        let n = (t / cfg.base_step).ceil().max(1.0) as usize;
        let h = t / n as f64;
        for i in 0..n {
            let s0 = i as f64 * h;
            state = self.panel(state, s0, h, t, x, depth, 0, &mut err)?;
        }
        for (i, c) in self.comps.iter().enumerate() {
            if matches!(c.kind, Kind::Integral { .. }) {
                err[i] += ROUNDING * abs_bound(&state[i], x);
            }
        }
        Ok((state, err))
    }

    #[allow(clippy::too_many_arguments)]
    fn panel(
        &self,
        st0: Vec<Polynomial>,
        s0: f64,
        h: f64,
        t: f64,
        x: &[f64],
        depth: usize,
        level: usize,
        err: &mut [f64],
    ) -> Result<Vec<Polynomial>> {
        let cfg = &self.engine.cfg;
        let whole = self.advance(&st0, s0, h, depth)?;
        let mid = self.advance(&st0, s0, 0.5 * h, depth)?;
        let fine = self.advance(&mid, s0 + 0.5 * h, 0.5 * h, depth)?;
        let rest = (t - s0 - h).max(0.0);
        let share = h / t;
        let mut est = vec![0.0; self.comps.len()];
        let mut ok = true;
        for (i, c) in self.comps.iter().enumerate() {
            if !matches!(c.kind, Kind::Integral { .. }) {
                continue;
            }
            let sg = &self.engine.sg;
            let diff = fine[i].sub(&whole[i]).abs_coeffs();
            est[i] = abs_bound(&sg.apply(&diff, rest, c.weight)?, x);
            let scale = abs_bound(&sg.apply(&fine[i].abs_coeffs(), rest, c.weight)?, x);
            let allowed = cfg.abs_tol.max(cfg.rel_tol * scale) * share;
            if !(est[i] <= allowed) {
                ok = false;
            }
        }
        if ok {
            for (e, v) in err.iter_mut().zip(&est) {
                *e += v;
            }
            return Ok(fine);
        }
        if level >= cfg.max_depth {
            return Err(Error::Quadrature(format!(
                "time panel [{s0}, {}] unresolved after {level} bisections",
                s0 + h
            )));
        }
        let half = 0.5 * h;
        let left = self.panel(st0, s0, half, t, x, depth, level + 1, err)?;
        self.panel(left, s0 + half, half, t, x, depth, level + 1, err)
    }
}

fn product<'p>(dim: usize, m: &[usize], get: impl Fn(usize) -> &'p Polynomial) -> Result<Polynomial> {
    let mut acc = Polynomial::constant(dim, 1.0);
    for (j, &mj) in m.iter().enumerate() {
        for _ in 0..mj {
            acc = acc.mul(get(j))?;
        }
    }
    Ok(acc)
}

/// Evaluates u^k for both mechanisms and the backbone moments V^k.
pub struct MomentEngine {
    sg: SemigroupAction,
    cfg: MomentConfig,
    rule: GaussLegendre,
}

impl MomentEngine {
    pub fn new(params: ModelParams, cfg: MomentConfig) -> Self {
        MomentEngine { sg: SemigroupAction::new(params), rule: GaussLegendre::new(cfg.order), cfg }
    }

    pub fn params(&self) -> &ModelParams {
        self.sg.params()
    }

    pub fn config(&self) -> &MomentConfig {
        &self.cfg
    }

    pub fn semigroup(&self) -> &SemigroupAction {
        &self.sg
    }

    fn check(&self, f: &Polynomial, x: &[f64], t: f64, k: usize) -> Result<()> {
        if !(1..=4).contains(&k) {
            return Err(Error::InvalidParameter(format!("moment order must be in 1..=4, got {k}")));
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time must be finite and >= 0, got {t}")));
        }
        let d = self.params().dim;
        if f.dim() != d || x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: if f.dim() != d { f.dim() } else { x.len() } });
        }
        Ok(())
    }

    fn u_components(&self, mech: Mechanism, kmax: usize, offset: usize) -> Result<Vec<Component>> {
        let a = mech.weight(self.params());
        let mut comps = Vec::new();
        comps.push(Component { weight: a, depth: 0, kind: Kind::Closed(Closed::Semigroup(a)) });
        for k in 2..=kmax {
            comps.push(Component {
                weight: a,
                depth: k - 1,
                kind: Kind::Integral {
                    scale: -1.0,
                    integrand: Integrand::U {
                        mech,
                        terms: reduced_terms(k)?,
                        family: (0..k - 1).map(|j| offset + j).collect(),
                    },
                },
            });
        }
        Ok(comps)
    }

    /// u^1, ..., u^kmax at (x, t) for one mechanism.
    pub fn u_moments(
        &self,
        f: &Polynomial,
        x: &[f64],
        t: f64,
        kmax: usize,
        mech: Mechanism,
    ) -> Result<Vec<MomentResult>> {
        self.check(f, x, t, kmax)?;
        let sys = System { engine: self, f, comps: self.u_components(mech, kmax, 0)? };
        let (state, err) = sys.solve(x, t)?;
        let kind = match mech {
            Mechanism::Super => MomentKind::USuper,
            Mechanism::Sub => MomentKind::USub,
        };
        Ok((0..kmax)
            .map(|j| MomentResult {
                kind,
                k: j + 1,
                x: x.to_vec(),
                t,
                value: state[j].eval(x),
                abs_error_estimate: err[j],
            })
            .collect())
    }

    pub fn u_moment(&self, f: &Polynomial, x: &[f64], t: f64, k: usize, mech: Mechanism) -> Result<MomentResult> {
        self.check(f, x, t, k)?;
        Ok(self.u_moments(f, x, t, k, mech)?.pop().expect("k >= 1"))
    }

    /// u*^1..u*^kmax and V^1..V^kmax at (x, t).
    pub fn backbone_moments(
        &self,
        f: &Polynomial,
        x: &[f64],
        t: f64,
        kmax: usize,
    ) -> Result<(Vec<MomentResult>, Vec<MomentResult>)> {
        self.check(f, x, t, kmax)?;
        let p = *self.params();
        let mut comps = self.u_components(Mechanism::Sub, kmax, 0)?;
        let v0 = comps.len();
        comps.push(Component { weight: p.alpha, depth: 0, kind: Kind::Closed(Closed::BackboneMean) });
        for k in 2..=kmax {
            comps.push(Component {
                weight: p.alpha,
                depth: k,
                kind: Kind::Integral {
                    scale: p.beta / p.alpha,
                    integrand: Integrand::V {
                        k,
                        terms: reduced_terms(k)?,
                        ustar: (0..k).collect(),
                        v: (0..k - 1).map(|j| v0 + j).collect(),
                    },
                },
            });
        }
        let sys = System { engine: self, f, comps };
        let (state, err) = sys.solve(x, t)?;
        let mk = |kind, i: usize, k: usize| MomentResult {
            kind,
            k,
            x: x.to_vec(),
            t,
            value: state[i].eval(x),
            abs_error_estimate: err[i],
        };
        let us = (0..kmax).map(|j| mk(MomentKind::USub, j, j + 1)).collect();
        let vs = (0..kmax).map(|j| mk(MomentKind::Backbone, v0 + j, j + 1)).collect();
        Ok((us, vs))
    }

    pub fn backbone_moment(&self, f: &Polynomial, x: &[f64], t: f64, k: usize) -> Result<MomentResult> {
        self.check(f, x, t, k)?;
        Ok(self.backbone_moments(f, x, t, k)?.1.pop().expect("k >= 1"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine(alpha: f64, beta: f64) -> MomentEngine {
        MomentEngine::new(ModelParams::new(1.0, 1.0, alpha, beta, 1).unwrap(), MomentConfig::default())
    }

    /// u^k for f = 1 from the explicit Laplace exponent E theta / (1 + c theta).
    fn constant_oracle(a: f64, beta: f64, t: f64, k: usize) -> f64 {
        let e = (a * t).exp();
        let c = beta * (e - 1.0) / a;
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        e * if k % 2 == 1 { 1.0 } else { -1.0 } * fact * c.powi(k as i32 - 1)
    }

    #[test]
    fn constant_function_matches_closed_form() {
        let eng = engine(1.3, 0.7);
        let one = Polynomial::constant(1, 1.0);
        for mech in [Mechanism::Super, Mechanism::Sub] {
            let a = mech.weight(eng.params());
            let res = eng.u_moments(&one, &[0.4], 1.7, 4, mech).unwrap();
            for r in &res {
                let exact = constant_oracle(a, 0.7, 1.7, r.k);
                assert!(
                    (r.value - exact).abs() <= r.abs_error_estimate.max(1e-12 * exact.abs()) + 1e-12,
                    "{mech:?} k={} got {} want {} est {}",
                    r.k,
                    r.value,
                    exact,
                    r.abs_error_estimate
                );
                assert!(r.abs_error_estimate <= 1e-6);
            }
            assert_eq!(res[0].abs_error_estimate, 0.0);
        }
    }

    #[test]
    fn zero_time_and_signs() {
        let eng = engine(1.0, 1.0);
        let f = Polynomial::parse("x^2 - 0.5", 1).unwrap();
        assert_eq!(eng.u_moment(&f, &[1.0], 0.0, 2, Mechanism::Super).unwrap().value, 0.0);
        assert_eq!(eng.backbone_moment(&f, &[1.0], 0.0, 2).unwrap().value, 0.0);
        for mech in [Mechanism::Super, Mechanism::Sub] {
            for x in [0.0, 1.0, -2.0] {
                assert!(eng.u_moment(&f, &[x], 1.5, 2, mech).unwrap().value <= 0.0);
            }
        }
    }

    #[test]
    fn variance_of_identity_matches_integral() {
        // -u^2_x(0, t) = 2 beta int_0^t e^{a(t-s)} e^{2(a-mu)s} v(t-s) ds, with
        // a = mu = sigma = 1 this is (e^t - 1) - (1 - e^{-t}).
        let eng = engine(1.0, 1.0);
        let f = Polynomial::parse("x", 1).unwrap();
        for t in [0.5f64, 1.0, 2.0] {
            let r = eng.u_moment(&f, &[0.0], t, 2, Mechanism::Super).unwrap();
            let exact = (t.exp() - 1.0) - (1.0 - (-t).exp());
            assert!((-r.value - exact).abs() <= r.abs_error_estimate + 1e-13, "t={t}");
        }
    }

    #[test]
    fn backbone_first_moment_closed_form() {
        let eng = engine(2.0, 0.5);
        let f = Polynomial::parse("x^2 + x", 1).unwrap();
        let t = 0.8;
        let r = eng.backbone_moment(&f, &[0.3], t, 1).unwrap();
        let pf = eng.semigroup().apply(&f, t, 0.0).unwrap().eval(&[0.3]);
        assert_eq!(r.abs_error_estimate, 0.0);
        assert!((r.value - (-2.0 * 0.25 * (2.0 * t).sinh() * pf)).abs() < 1e-14);
    }

    #[test]
    fn identity_links_backbone_and_superprocess() {
        let eng = engine(1.0, 1.0);
        let f = Polynomial::parse("x", 1).unwrap();
        let (x, t) = ([1.0], 1.0);
        let u = eng.u_moments(&f, &x, t, 4, Mechanism::Super).unwrap();
        let (us, v) = eng.backbone_moments(&f, &x, t, 4).unwrap();
        for k in 0..4 {
            let lhs = u[k].value;
            let rhs = us[k].value - v[k].value;
            let tol = u[k].abs_error_estimate + us[k].abs_error_estimate + v[k].abs_error_estimate;
            assert!((lhs - rhs).abs() <= tol.max(1e-12), "k={} {lhs} {rhs} {tol}", k + 1);
        }
    }
}
