//! Gauss-Legendre rules and an adaptive panel-bisection integrator.

use crate::error::{Error, Result};

/// m-point Gauss-Legendre rule on [0, 1], nodes ascending.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(m: usize) -> GaussLegendre {
        assert!(m >= 1, "rule needs at least one node");
        let mut nodes = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for i in 1..=m {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(m, x);
            if d != 0.0 {
                dp = d;
            }
            nodes.push(0.5 * (1.0 - x));
            weights.push(1.0 / ((1.0 - x * x) * dp * dp));
        }
        GaussLegendre { nodes, weights }
    }

    /// Fixed-rule integral over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let h = b - a;
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(a + h * x)).sum::<f64>() * h
    }
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_depth: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-8, rel: 1e-10, max_depth: 30 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Adaptive integration of a scalar function over [a, b]. Each panel is
/// accepted when the whole-panel rule and the two half-panel rules agree
/// to within the panel's share of the tolerance.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    mut f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    let whole = panel(rule, &mut f, a, b);
    let mut out = Integral { value: 0.0, error: 0.0 };
    let width = b - a;
    recurse(rule, &mut f, a, b, whole, width, tol, 0, &mut out)?;
    Ok(out)
}

struct Panel {
    value: f64,
    magnitude: f64,
}

fn panel<F: FnMut(f64) -> f64>(rule: &GaussLegendre, f: &mut F, a: f64, b: f64) -> Panel {
    let h = b - a;
    let mut value = 0.0;
    let mut magnitude = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let y = w * f(a + h * x);
        value += y;
        magnitude += y.abs();
    }
    Panel { value: value * h, magnitude: magnitude * h.abs() }
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    f: &mut F,
    a: f64,
    b: f64,
    whole: Panel,
    width: f64,
    tol: Tolerance,
    depth: usize,
    out: &mut Integral,
) -> Result<()> {
    let m = 0.5 * (a + b);
    let left = panel(rule, f, a, m);
    let right = panel(rule, f, m, b);
    let refined = left.value + right.value;
    let diff = (refined - whole.value).abs();
    let floor = 64.0 * f64::EPSILON * (left.magnitude + right.magnitude);
    let share = ((b - a) / width).abs();
    let allowed = (tol.abs * share).max(tol.rel * refined.abs()) + floor;
    if diff <= allowed {
        out.value += refined;
        out.error += diff.max(floor);
        return Ok(());
    }
    if depth >= tol.max_depth {
        return Err(Error::Quadrature(format!(
            "panel [{a}, {b}] not resolved after {depth} bisections (difference {diff:e})"
        )));
    }
    recurse(rule, f, a, m, left, width, tol, depth + 1, out)?;
    recurse(rule, f, m, b, right, width, tol, depth + 1, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let r = GaussLegendre::new(6);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for k in 0..12 {
            let v = r.integrate(|x| x.powi(k), 0.0, 1.0);
            assert!((v - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "degree {k}");
        }
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let r = GaussLegendre::new(10);
        let tol = Tolerance { abs: 1e-12, rel: 1e-12, max_depth: 40 };
        let v = integrate_adaptive(&r, |x| 1.0 / (1e-4 + x * x), -1.0, 1.0, tol).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v.value - exact).abs() / exact < 1e-10);
    }
}
