//! Moments of the superprocess and of the backbone dressing, total-mass
//! laws and the limit sampler.

mod engine;
mod mass;

pub use engine::{MomentConfig, MomentEngine};
pub use mass::{dressing_mean, extinction_probability, sample_v_infinity, total_mass_laplace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Branching mechanism: `Super` is psi(l) = -alpha l + beta l^2 and `Sub`
/// is psi*(l) = alpha l + beta l^2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Super,
    Sub,
}

impl Mechanism {
    fn signed_alpha(&self, p: &ModelParams) -> f64 {
        match self {
            Mechanism::Super => -p.alpha,
            Mechanism::Sub => p.alpha,
        }
    }

    /// Exponent a of the weighted semigroup in the moment recursion, -psi'(0).
    pub fn weight(&self, p: &ModelParams) -> f64 {
        -self.signed_alpha(p)
    }

    /// n-th derivative of the mechanism at lambda.
    pub fn derivative(&self, n: usize, lambda: f64, p: &ModelParams) -> f64 {
        let a = self.signed_alpha(p);
        match n {
            0 => a * lambda + p.beta * lambda * lambda,
            1 => a + 2.0 * p.beta * lambda,
            2 => 2.0 * p.beta,
            _ => 0.0,
        }
    }
}

/// One element m of B_k with its combinatorial weight
/// k! / prod_j (m_j! (j!)^{m_j}).
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTerm {
    pub m: Vec<usize>,
    pub coeff: f64,
}

impl PartitionTerm {
    /// |m| = sum_j m_j.
    pub fn order(&self) -> usize {
        self.m.iter().sum()
    }
}

/// Largest supported moment order.
pub const MAX_ORDER: usize = 8;

/// The set A_k: all m in N^k with sum_j j m_j = k, in descending
/// lexicographic order. The last element is (0, ..., 0, 1).
pub fn faa_di_bruno_terms(k: usize) -> Result<Vec<PartitionTerm>> {
    if !(1..=MAX_ORDER).contains(&k) {
        return Err(Error::InvalidParameter(format!("moment order must be in 2..={MAX_ORDER}, got {k}")));
    }
    let mut out = Vec::new();
    let mut m = vec![0usize; k];
    enumerate(k, 0, k, &mut m, &mut out);
    Ok(out)
}

/// B_k = A_k without (0, ..., 0, 1).
pub fn reduced_terms(k: usize) -> Result<Vec<PartitionTerm>> {
    let mut t = faa_di_bruno_terms(k)?;
    t.retain(|p| p.m[k - 1] == 0);
    Ok(t)
}

fn enumerate(k: usize, pos: usize, rest: usize, m: &mut Vec<usize>, out: &mut Vec<PartitionTerm>) {
    let j = pos + 1;
    if pos == k - 1 {
        if rest % j == 0 {
            m[pos] = rest / j;
            out.push(PartitionTerm { m: m.clone(), coeff: weight(k, m) });
            m[pos] = 0;
        }
        return;
    }
    for c in (0..=rest / j).rev() {
        m[pos] = c;
        enumerate(k, pos + 1, rest - c * j, m, out);
    }
    m[pos] = 0;
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn weight(k: usize, m: &[usize]) -> f64 {
    let mut denom = 1.0;
    for (i, &mj) in m.iter().enumerate() {
        denom *= factorial(mj) * factorial(i + 1).powi(mj as i32);
    }
    factorial(k) / denom
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    USuper,
    USub,
    Backbone,
}

impl MomentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MomentKind::USuper => "u_super",
            MomentKind::USub => "u_sub",
            MomentKind::Backbone => "backbone",
        }
    }
}

/// A moment value at (x, t) with an absolute error estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub kind: MomentKind,
    pub k: usize,
    pub x: Vec<f64>,
    pub t: f64,
    pub value: f64,
    pub abs_error_estimate: f64,
}
