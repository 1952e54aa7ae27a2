use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::polynomial::Polynomial;

/// Finite measure with finitely many atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    dim: usize,
    atoms: Vec<(Vec<f64>, f64)>,
}

impl AtomicMeasure {
    pub fn new(dim: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        for (x, m) in &atoms {
            if x.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
            }
            if !(m.is_finite() && *m >= 0.0) || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("invalid atom {x:?} with mass {m}")));
            }
        }
        Ok(AtomicMeasure { dim, atoms })
    }

    /// Unit mass at x.
    pub fn dirac(x: Vec<f64>) -> Self {
        let dim = x.len();
        AtomicMeasure::new(dim, vec![(x, 1.0)]).expect("finite point")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[(Vec<f64>, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, m)| m).sum()
    }

    pub fn integrate(&self, f: &Polynomial) -> f64 {
        self.atoms.iter().map(|(x, m)| m * f.eval(x)).sum()
    }
}
