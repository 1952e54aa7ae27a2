//! Model parameters, polynomial test functions and atomic measures.

pub mod measure;
pub mod params;
pub mod polynomial;

pub use measure::AtomicMeasure;
pub use params::{ModelParams, Regime, MAX_DIM};
pub use polynomial::{MultiIndex, Polynomial, DEGREE_CAP};

/// E[G^n] for G ~ N(0, var): zero for odd n, var^(n/2) (n-1)!! for even n.
pub fn gaussian_moment(n: usize, var: f64) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let mut m = 1.0;
    let mut k = n as i64 - 1;
    while k > 1 {
        m *= k as f64;
        k -= 2;
    }
    m * var.powi((n / 2) as i32)
}

/// Integral of a polynomial against the invariant measure phi.
pub fn phi_integral(f: &Polynomial, params: &ModelParams) -> f64 {
    let var = params.stationary_variance();
    let mut table = [0.0; DEGREE_CAP + 1];
    for (n, m) in table.iter_mut().enumerate() {
        *m = gaussian_moment(n, var);
    }
    f.terms()
        .map(|(e, c)| c * e.iter().take(f.dim()).map(|&k| table[k as usize]).product::<f64>())
        .sum()
}

/// f minus its phi-mean.
pub fn center(f: &Polynomial, params: &ModelParams) -> Polynomial {
    let m = phi_integral(f, params);
    f.sub(&Polynomial::constant(f.dim(), m))
}

/// The vector of phi-means of the partial derivatives of f.
pub fn grad_inner(f: &Polynomial, params: &ModelParams) -> Vec<f64> {
    f.gradient().iter().map(|g| phi_integral(g, params)).collect()
}
