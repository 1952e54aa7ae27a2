//! Moments, limit variances and simulators for the supercritical
//! Ornstein-Uhlenbeck superprocess and its prolific backbone.

pub mod backbone;
pub mod error;
pub mod experiment;
pub mod model;
pub mod moments;
pub mod particles;
pub mod quadrature;
pub mod rng;
pub mod semigroup;
pub mod stats;
pub mod validation;
pub mod variance;

pub use error::{Error, Result};
pub use model::{AtomicMeasure, ModelParams, Polynomial, Regime};
pub use moments::{Mechanism, MomentConfig, MomentEngine, MomentKind, MomentResult};
pub use semigroup::SemigroupAction;
