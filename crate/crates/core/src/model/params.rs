use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Slow,
    Critical,
    Fast,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Slow => "slow",
            Regime::Critical => "critical",
            Regime::Fast => "fast",
        }
    }

    pub fn parse(s: &str) -> Result<Regime> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slow" => Ok(Regime::Slow),
            "critical" => Ok(Regime::Critical),
            "fast" => Ok(Regime::Fast),
            other => Err(Error::InvalidParameter(format!("unknown regime '{other}'"))),
        }
    }
}

/// Parameters of the supercritical OU superprocess with
/// branching mechanism psi(l) = -alpha l + beta l^2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub sigma: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dim: usize,
    regime: Regime,
}

impl ModelParams {
    /// The regime is read off the sign of alpha - 2 mu. Exact equality is
    /// classified as critical; use [`ModelParams::critical`] to request it.
    pub fn new(sigma: f64, mu: f64, alpha: f64, beta: f64, dim: usize) -> Result<Self> {
        for (name, v) in [("sigma", sigma), ("mu", mu), ("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidParameter(format!("dimension must be in 1..={MAX_DIM}, got {dim}")));
        }
        let two_mu = 2.0 * mu;
        let regime = if alpha < two_mu {
            Regime::Slow
        } else if alpha > two_mu {
            Regime::Fast
        } else {
            Regime::Critical
        };
        Ok(ModelParams { sigma, mu, alpha, beta, dim, regime })
    }

    /// Critical parameters: alpha is set to exactly 2 mu.
    pub fn critical(sigma: f64, mu: f64, beta: f64, dim: usize) -> Result<Self> {
        Self::new(sigma, mu, 2.0 * mu, beta, dim)
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Variance of each coordinate under the invariant measure.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.mu)
    }

    /// Initial intensity of the prolific backbone, alpha / beta.
    pub fn lambda_star(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Variance of one coordinate of the OU bridge noise after time t.
    pub fn bridge_variance(&self, t: f64) -> f64 {
        self.stationary_variance() * -(-2.0 * self.mu * t).exp_m1()
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.sigma, self.mu, alpha, self.beta, self.dim)
    }
}
