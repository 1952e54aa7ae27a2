//! Fixtures shared by the benchmarks.

use oulab_core::{AtomicMeasure, ModelParams, Polynomial};

pub fn slow_params() -> ModelParams {
    ModelParams::new(1.0, 1.0, 1.0, 0.5, 1).expect("valid parameters")
}

pub fn plane_params() -> ModelParams {
    ModelParams::new(1.0, 1.0, 1.0, 1.0, 2).expect("valid parameters")
}

pub fn poly(s: &str, dim: usize) -> Polynomial {
    Polynomial::parse(s, dim).expect("valid polynomial")
}

pub fn origin(dim: usize) -> AtomicMeasure {
    AtomicMeasure::dirac(vec![0.0; dim])
}
