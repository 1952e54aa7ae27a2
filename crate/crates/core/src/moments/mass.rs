use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::Result;
use crate::model::{AtomicMeasure, ModelParams, Polynomial};
use crate::semigroup::SemigroupAction;

/// v_theta(t) with E_nu exp(-theta |X_t|) = exp(-|nu| v_theta(t)).
pub fn total_mass_laplace(theta: f64, t: f64, p: &ModelParams) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    let (a, b) = (p.alpha, p.beta);
    // alpha e^{at} / (C + beta e^{at}) with C = (alpha - beta theta) / theta,
    // rewritten to stay finite for large t.
    a * theta / ((a - b * theta) * (-a * t).exp() + b * theta)
}

/// P_nu(extinction) = exp(-|nu| alpha / beta).
pub fn extinction_probability(total_mass: f64, p: &ModelParams) -> f64 {
    (-total_mass * p.lambda_star()).exp()
}

/// One draw of the martingale limit: a Poisson(|nu| alpha / beta) number of
/// exponential variables with rate alpha / beta.
pub fn sample_v_infinity<R: Rng + ?Sized>(total_mass: f64, p: &ModelParams, rng: &mut R) -> f64 {
    let lam = total_mass * p.lambda_star();
    if lam <= 0.0 {
        return 0.0;
    }
    let n = Poisson::new(lam).expect("finite positive mean").sample(rng) as u64;
    let e = Exp::new(p.lambda_star()).expect("positive rate");
    (0..n).map(|_| e.sample(rng)).sum()
}

/// e^{alpha (s - t)} <nu, P_{t+s} f>.
pub fn dressing_mean(f: &Polynomial, nu: &AtomicMeasure, s: f64, t: f64, sg: &SemigroupAction) -> Result<f64> {
    let p = sg.params();
    let g = sg.apply(f, t + s, 0.0)?;
    Ok((p.alpha * (s - t)).exp() * nu.integrate(&g))
}
