//! Exact action of the OU semigroup on polynomials.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::model::polynomial::basis;
use crate::model::{center, gaussian_moment, grad_inner, ModelParams, Polynomial, DEGREE_CAP};

const N: usize = DEGREE_CAP + 1;
const CACHE_LIMIT: usize = 8192;

/// One-coordinate transfer table for time t:
/// x^k maps to sum_j table[k][j] x^j.
struct Transfer {
    table: [[f64; N]; N],
}

impl Transfer {
    fn new(params: &ModelParams, t: f64) -> Transfer {
        let e = (-params.mu * t).exp();
        let v = params.bridge_variance(t);
        let mut pow_e = [1.0; N];
        let mut mom = [0.0; N];
        for n in 0..N {
            if n > 0 {
                pow_e[n] = pow_e[n - 1] * e;
            }
            mom[n] = gaussian_moment(n, v);
        }
        let mut table = [[0.0; N]; N];
        for k in 0..N {
            let mut binom = 1.0;
            for j in 0..=k {
                table[k][j] = binom * pow_e[j] * mom[k - j];
                binom = binom * (k - j) as f64 / (j + 1) as f64;
            }
        }
        Transfer { table }
    }
}

/// Applies P^a_t = e^{a t} P_t to polynomials. Transfer tables are cached
/// per time value; the cache takes a read lock on lookup and a write lock
/// on insert.
pub struct SemigroupAction {
    params: ModelParams,
    cache: RwLock<HashMap<u64, Arc<Transfer>>>,
}

impl SemigroupAction {
    pub fn new(params: ModelParams) -> Self {
        SemigroupAction { params, cache: RwLock::new(HashMap::new()) }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Variance of each coordinate of the bridge noise after time t.
    pub fn bridge_variance(&self, t: f64) -> f64 {
        self.params.bridge_variance(t)
    }

    fn transfer(&self, t: f64) -> Arc<Transfer> {
        let key = t.to_bits();
        if let Some(tr) = self.cache.read().expect("cache lock").get(&key) {
            return tr.clone();
        }
        let tr = Arc::new(Transfer::new(&self.params, t));
        let mut w = self.cache.write().expect("cache lock");
        if w.len() >= CACHE_LIMIT {
            w.clear();
        }
        w.insert(key, tr.clone());
        tr
    }

    /// e^{a t} P_t f.
    pub fn apply(&self, f: &Polynomial, t: f64, a: f64) -> Result<Polynomial> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time must be finite and >= 0, got {t}")));
        }
        if f.dim() != self.params.dim {
            return Err(Error::DimensionMismatch { expected: self.params.dim, got: f.dim() });
        }
        if f.is_zero() {
            return Ok(f.clone());
        }
        let tr = self.transfer(t);
        let w = (a * t).exp();
        let src = f.dense();
        let dim = f.dim();
        let mut out = vec![0.0; src.len()];
        if dim == 1 {
            for (k, c) in src.iter().enumerate() {
                if *c != 0.0 {
                    let row = &tr.table[k];
                    for j in 0..=k {
                        out[j] += c * row[j];
                    }
                }
            }
        } else {
            let b = basis(dim);
            for (i, c) in src.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                let e = b.exps[i];
                let k = [e[0] as usize, e[1] as usize, e[2] as usize];
                for j0 in 0..=k[0] {
                    let c0 = c * tr.table[k[0]][j0];
                    for j1 in 0..=k[1] {
                        let c1 = c0 * tr.table[k[1]][j1];
                        if dim == 2 {
                            out[b.index(&[j0 as u8, j1 as u8, 0])] += c1;
                            continue;
                        }
                        for j2 in 0..=k[2] {
                            let c2 = c1 * tr.table[k[2]][j2];
                            out[b.index(&[j0 as u8, j1 as u8, j2 as u8])] += c2;
                        }
                    }
                }
            }
        }
        if w != 1.0 {
            for v in out.iter_mut() {
                *v *= w;
            }
        }
        Ok(Polynomial::from_dense(dim, out))
    }

    /// |e^{mu t} P_t f~(x) - <grad f, phi> . x|, the distance to the linear
    /// profile that the rescaled centred semigroup approaches.
    pub fn gradient_profile_error(&self, f: &Polynomial, x: &[f64], t: f64) -> Result<f64> {
        let ft = center(f, &self.params);
        let p = self.apply(&ft, t, 0.0)?;
        let c = grad_inner(f, &self.params);
        let lin: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
        Ok(((self.params.mu * t).exp() * p.eval(x) - lin).abs())
    }
}

/// Upper bound for |g(x)| over the coefficient magnitudes of g.
pub fn abs_bound(g: &Polynomial, x: &[f64]) -> f64 {
    let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    g.abs_coeffs().eval(&ax)
}

