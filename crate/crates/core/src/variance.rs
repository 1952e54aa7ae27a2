//! Limit variances of the spatial central limit theorems and the
//! normalized second moments that converge to them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{center, grad_inner, phi_integral, ModelParams, Polynomial, Regime};
use crate::moments::MomentEngine;
use crate::quadrature::{integrate_adaptive, GaussLegendre, Tolerance};
use crate::semigroup::SemigroupAction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    Quadrature,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceResult {
    pub regime: Regime,
    pub sigma_sq: f64,
    /// Bound on the neglected part of the improper time integral.
    pub tail_bound: f64,
    pub method: VarianceMethod,
}

#[derive(Clone, Copy, Debug)]
pub struct VarianceConfig {
    /// Required bound on the truncated tail.
    pub tail_tol: f64,
    pub quad: Tolerance,
    pub order: usize,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        VarianceConfig {
            tail_tol: 1e-10,
            quad: Tolerance { abs: 1e-14, rel: 1e-13, max_depth: 40 },
            order: 10,
        }
    }
}

fn require(params: &ModelParams, regime: Regime) -> Result<()> {
    if params.regime() != regime {
        return Err(Error::Regime(format!(
            "operation needs the {} regime, parameters are {}",
            regime.as_str(),
            params.regime().as_str()
        )));
    }
    Ok(())
}

/// sigma_f^2 in the slow regime, by quadrature in time. All integrals
/// against the invariant measure are exact, using
/// <phi, P^a_s g> = e^{a s} <phi, g>.
pub fn sigma_slow(f: &Polynomial, params: &ModelParams, cfg: &VarianceConfig) -> Result<VarianceResult> {
    require(params, Regime::Slow)?;
    let ft = center(f, params);
    let zero = VarianceResult { regime: Regime::Slow, sigma_sq: 0.0, tail_bound: 0.0, method: VarianceMethod::Quadrature };
    if ft.is_zero() {
        return Ok(zero);
    }
    let sg = SemigroupAction::new(*params);
    let (a, b, mu) = (params.alpha, params.beta, params.mu);
    // g(s) = <phi, (P_s f~)^2>
    let g = |s: f64| -> Result<f64> {
        let p = sg.apply(&ft, s, 0.0)?;
        Ok(phi_integral(&p.mul(&p)?, params))
    };
    g(0.0)?;
    let rule = GaussLegendre::new(cfg.order);
    let mut failure: Option<Error> = None;
    let mut guard = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    let g0 = g(0.0)?;
    let rate = (2.0 * mu - a).min(2.0 * a);
    let horizon = (40.0f64).max((cfg.tail_tol.ln().abs() + 10.0) / rate);

    let integrand = |s: f64, guard: &mut dyn FnMut(Result<f64>) -> f64| -> f64 {
        let gs = guard(g(s));
        let inner = integrate_adaptive(&rule, |r| (-a * (s - r) - 2.0 * a * r).exp() * guard(g(r)), 0.0, s, cfg.quad)
            .map(|v| v.value);
        let inner = guard(inner);
        2.0 * b * (a * s).exp() * gs - 2.0 * b * (-3.0 * a * s).exp() * gs + 4.0 * a * b * (-a * s).exp() * inner
    };
    let outer = integrate_adaptive(&rule, |s| integrand(s, &mut guard), 0.0, horizon, cfg.quad);
    if let Some(e) = failure {
        return Err(e);
    }
    let outer = outer?;
    let gt = g(horizon)?;
    let tail = (b / a)
        * (2.0 * b * gt * (a * horizon).exp() / (2.0 * mu - a)
            + 2.0 * b * gt * (-3.0 * a * horizon).exp() / (3.0 * a + 2.0 * mu)
            + 4.0 * a * b * g0 * (-2.0 * a * horizon).exp() / ((a + 2.0 * mu) * 2.0 * a));
    if !(tail < cfg.tail_tol) {
        return Err(Error::Quadrature(format!("tail bound {tail:e} above tolerance {:e}", cfg.tail_tol)));
    }
    Ok(VarianceResult { sigma_sq: (b / a) * outer.value, tail_bound: tail + (b / a) * outer.error, ..zero })
}

/// sigma_f^2 in the critical regime: 2 beta^2 / alpha * sum_j c_j^2 sigma^2 / (2 mu)
/// with c = <grad f, phi>.
pub fn sigma_critical(f: &Polynomial, params: &ModelParams) -> Result<VarianceResult> {
    require(params, Regime::Critical)?;
    let c = grad_inner(f, params);
    let s: f64 = c.iter().map(|v| v * v).sum();
    Ok(VarianceResult {
        regime: Regime::Critical,
        sigma_sq: 2.0 * params.beta * params.beta / params.alpha * s * params.stationary_variance(),
        tail_bound: 0.0,
        method: VarianceMethod::ClosedForm,
    })
}

/// The same quantity with the Gaussian integral done by quadrature in x.
pub fn sigma_critical_quadrature(f: &Polynomial, params: &ModelParams) -> Result<VarianceResult> {
    require(params, Regime::Critical)?;
    let c = grad_inner(f, params);
    let v = params.stationary_variance();
    let sd = v.sqrt();
    let rule = GaussLegendre::new(12);
    let tol = Tolerance { abs: 1e-16, rel: 1e-14, max_depth: 40 };
    let norm = 1.0 / (2.0 * std::f64::consts::PI * v).sqrt();
    let half = 14.0 * sd;
    let second = integrate_adaptive(&rule, |x| x * x * norm * (-x * x / (2.0 * v)).exp(), -half, half, tol)?;
    let s: f64 = c.iter().map(|cj| cj * cj * second.value).sum();
    Ok(VarianceResult {
        regime: Regime::Critical,
        sigma_sq: 2.0 * params.beta * params.beta / params.alpha * s,
        tail_bound: second.error,
        method: VarianceMethod::Quadrature,
    })
}

/// V^2 of the centred function at (x, t).
pub fn centred_second_moment(engine: &MomentEngine, f: &Polynomial, x: &[f64], t: f64) -> Result<(f64, f64)> {
    let ft = center(f, engine.params());
    let r = engine.backbone_moment(&ft, x, t, 2)?;
    Ok((r.value, r.abs_error_estimate))
}

/// e^{-alpha t} V^2_{f~}(x, t), which tends to sigma_f^2 in the slow regime.
pub fn slow_asymptote(engine: &MomentEngine, f: &Polynomial, x: &[f64], t: f64) -> Result<f64> {
    let (v, _) = centred_second_moment(engine, f, x, t)?;
    Ok((-engine.params().alpha * t).exp() * v)
}

/// t^{-1} e^{-alpha t} V^2_{f~}(x, t), which tends to sigma_f^2 in the critical regime.
pub fn critical_asymptote(engine: &MomentEngine, f: &Polynomial, x: &[f64], t: f64) -> Result<f64> {
    let (v, _) = centred_second_moment(engine, f, x, t)?;
    Ok((-engine.params().alpha * t).exp() * v / t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastBoundReport {
    /// (x, t, e^{-2(alpha-mu)t} |V^2_{f~}(x, t)|) over the grid.
    pub values: Vec<(Vec<f64>, f64, f64)>,
    pub max_value: f64,
    pub all_finite: bool,
    /// Non-increasing in t for t >= 2 at every x.
    pub non_increasing: bool,
    /// Successive increments in t shrink for t >= 2 at every x.
    pub settling: bool,
}

pub fn fast_regime_bound_check(
    engine: &MomentEngine,
    f: &Polynomial,
    x_grid: &[Vec<f64>],
    t_grid: &[f64],
) -> Result<FastBoundReport> {
    let p = engine.params();
    require(p, Regime::Fast)?;
    let mut values = Vec::new();
    let mut non_increasing = true;
    let mut settling = true;
    for x in x_grid {
        let mut row = Vec::new();
        for &t in t_grid {
            let (v, _) = centred_second_moment(engine, f, x, t)?;
            let n = (-2.0 * (p.alpha - p.mu) * t).exp() * v.abs();
            values.push((x.clone(), t, n));
            if t >= 2.0 {
                row.push(n);
            }
        }
        let tol = 1e-12 * row.iter().fold(0.0f64, |m, v| m.max(*v));
        for w in row.windows(2) {
            if w[1] > w[0] + tol {
                non_increasing = false;
            }
        }
        for w in row.windows(3) {
            if (w[2] - w[1]).abs() > (w[1] - w[0]).abs() + tol {
                settling = false;
            }
        }
    }
    let max_value = values.iter().fold(0.0f64, |m, v| m.max(v.2));
    let all_finite = values.iter().all(|v| v.2.is_finite());
    Ok(FastBoundReport { values, max_value, all_finite, non_increasing, settling })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_examples() {
        let p = ModelParams::critical(1.0, 1.0, 1.0, 1).unwrap();
        let x = Polynomial::parse("x", 1).unwrap();
        assert_eq!(sigma_critical(&x, &p).unwrap().sigma_sq, 0.5);
        let x2 = Polynomial::parse("x^2", 1).unwrap();
        assert_eq!(sigma_critical(&x2, &p).unwrap().sigma_sq, 0.0);
        let q = sigma_critical_quadrature(&x, &p).unwrap().sigma_sq;
        assert!((q - 0.5).abs() / 0.5 < 1e-8);
        assert!(sigma_slow(&x, &p, &VarianceConfig::default()).is_err());
    }

    #[test]
    fn slow_identity_function() {
        // For f = x, sigma = mu = 1: g(s) = e^{-2s}/2 and the integral is
        // elementary, (beta/alpha)[beta/(2-alpha) - beta/(3alpha+2)
        // + 2 alpha beta/(alpha+2) (1/(2alpha) - 1/(3alpha+2))].
        let (a, b) = (1.0, 0.5);
        let p = ModelParams::new(1.0, 1.0, a, b, 1).unwrap();
        let x = Polynomial::parse("x", 1).unwrap();
        let r = sigma_slow(&x, &p, &VarianceConfig::default()).unwrap();
        let exact = (b / a)
            * (b / (2.0 - a) - b / (3.0 * a + 2.0)
                + 2.0 * a * b / (a + 2.0) * (1.0 / (2.0 * a) - 1.0 / (3.0 * a + 2.0)));
        assert!((r.sigma_sq - exact).abs() < 1e-10, "{} vs {exact}", r.sigma_sq);
        assert!((exact - 0.25).abs() < 1e-15);
        assert!(r.tail_bound < 1e-10);
        let c = sigma_slow(&Polynomial::constant(1, 3.0), &p, &VarianceConfig::default()).unwrap();
        assert_eq!(c.sigma_sq, 0.0);
    }
}
