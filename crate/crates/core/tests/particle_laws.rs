use oulab_core::model::center;
use oulab_core::moments::total_mass_laplace;
use oulab_core::particles::*;
use oulab_core::rng::{domain, stream};
use oulab_core::stats::{ks_two_sample, mean, std_error_of_mean, variance, variance_std_error};
use oulab_core::*;

const CAP: usize = 50_000_000;

fn run_exact(p: &ModelParams, nu: &AtomicMeasure, t: f64, n: usize, mech: Mechanism, reps: u64, seed: u64) -> Vec<ParticleSystem> {
    (0..reps)
        .map(|r| {
            let mut rng = stream(seed, domain::TEST, r);
            simulate_superprocess(nu, t, n, mech, p, CAP, &mut rng).unwrap()
        })
        .collect()
}

fn within(x: &[f64], target: f64, k: f64) -> bool {
    (mean(x) - target).abs() <= k * std_error_of_mean(x)
}

#[test]
fn martingale_mean_of_total_mass() {
    let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1).unwrap();
    let nu = AtomicMeasure::dirac(vec![0.0]);
    let runs = run_exact(&p, &nu, 1.0, 50, Mechanism::Super, 10_000, 11);
    let w: Vec<f64> = runs.iter().map(|s| (-1.0f64).exp() * s.total_mass()).collect();
    assert!(within(&w, 1.0, 3.0), "mean {} se {}", mean(&w), std_error_of_mean(&w));
}

#[test]
fn subcritical_mass_decays() {
    let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1).unwrap();
    let nu = AtomicMeasure::dirac(vec![0.0]);
    let runs = run_exact(&p, &nu, 1.5, 50, Mechanism::Sub, 10_000, 12);
    let m: Vec<f64> = runs.iter().map(|s| s.total_mass()).collect();
    assert!(within(&m, (-1.5f64).exp(), 3.0), "mean {}", mean(&m));
}

#[test]
fn mean_of_identity_integral() {
    let p = ModelParams::new(1.0, 1.0, 1.5, 1.0, 1).unwrap();
    let x0 = 0.8;
    let nu = AtomicMeasure::dirac(vec![x0]);
    let f = Polynomial::parse("x", 1).unwrap();
    let runs = run_exact(&p, &nu, 2.0, 20, Mechanism::Super, 10_000, 13);
    let v: Vec<f64> = runs.iter().map(|s| evaluate_functionals(s, &f, &p).integral_f).collect();
    assert!(within(&v, (0.5f64 * 2.0).exp() * x0, 3.0), "mean {}", mean(&v));
}

#[test]
fn h_martingale_is_constant_in_time() {
    let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1).unwrap();
    let nu = AtomicMeasure::dirac(vec![1.0]);
    let f = Polynomial::parse("x", 1).unwrap();
    let mut h = vec![Vec::new(); 3];
    for r in 0..4000 {
        let mut rng = stream(14, domain::TEST, r);
        let mut s = ParticleSystem::discretize(&nu, 10);
        for (k, t) in [1.0, 2.0, 4.0].into_iter().enumerate() {
            advance_exact(&mut s, t, &p, Mechanism::Super, CAP, &mut rng).unwrap();
            h[k].push(evaluate_functionals(&s, &f, &p).h_value[0]);
        }
    }
    for hk in &h {
        assert!(within(hk, 1.0, 3.0), "mean {} se {}", mean(hk), std_error_of_mean(hk));
    }
}

#[test]
fn reconstructed_sampler_matches_event_simulation() {
    let p = ModelParams::new(1.0, 1.0, 1.0, 0.5, 1).unwrap();
    let nu = AtomicMeasure::dirac(vec![0.5]);
    let f = Polynomial::parse("x", 1).unwrap();
    let t = 1.5;
    let reps = 3000;
    let exact = run_exact(&p, &nu, t, 20, Mechanism::Super, reps, 15);
    let start = ParticleSystem::discretize(&nu, 20);
    let recon: Vec<ParticleSystem> = (0..reps)
        .map(|r| {
            let mut rng = stream(16, domain::TEST, r);
            advance_reconstructed(&start, t, &p, Mechanism::Super, CAP, &mut rng).unwrap()
        })
        .collect();
    let mass = |v: &[ParticleSystem]| v.iter().map(|s| s.total_mass()).collect::<Vec<_>>();
    let integ = |v: &[ParticleSystem]| v.iter().map(|s| s.integrate(&f)).collect::<Vec<_>>();
    let km = ks_two_sample(&mass(&exact), &mass(&recon));
    let ki = ks_two_sample(&integ(&exact), &integ(&recon));
    assert!(km.passes(0.01), "{km:?}");
    assert!(ki.passes(0.01), "{ki:?}");
}

#[test]
fn count_jump_matches_event_simulation() {
    let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1).unwrap();
    let nu = AtomicMeasure::dirac(vec![0.0]);
    let reps = 4000;
    let exact: Vec<f64> = run_exact(&p, &nu, 1.0, 10, Mechanism::Super, reps, 17)
        .iter()
        .map(|s| s.count() as f64)
        .collect();
    let jump: Vec<f64> = (0..reps)
        .map(|r| {
            let mut rng = stream(18, domain::TEST, r);
            advance_count(10, 1.0, 10, &p, Mechanism::Super, &mut rng).unwrap() as f64
        })
        .collect();
    let k = ks_two_sample(&exact, &jump);
    assert!(k.passes(0.01), "{k:?}");
    // Sub as well, where most lines die out.
    let sub: Vec<f64> = (0..reps)
        .map(|r| {
            let mut rng = stream(19, domain::TEST, r);
            advance_count(10, 1.0, 10, &p, Mechanism::Sub, &mut rng).unwrap() as f64
        })
        .collect();
    assert!(within(&sub, 10.0 * (-1.0f64).exp(), 3.0));
}

#[test]
fn gaussian_closure_has_exact_conditional_moments() {
    let p = ModelParams::new(1.0, 1.0, 3.0, 1.0, 1).unwrap();
    let n = 4;
    let g = center(&Polynomial::parse("x^3", 1).unwrap(), &p).axpy(-1.5, &Polynomial::parse("x", 1).unwrap());
    let pos: Vec<f64> = (0..40).map(|i| -1.5 + 3.0 * i as f64 / 39.0).collect();
    let start = ParticleSystem::from_positions(n, 1, 0.0, pos);
    let tau = 0.5;
    let closure = GaussianClosure::new(&g, tau, n, Mechanism::Super, &p).unwrap();
    let (m, v) = closure.moments(&start);
    let samples: Vec<f64> = (0..20_000)
        .map(|r| {
            let mut rng = stream(20, domain::TEST, r);
            advance_reconstructed(&start, tau, &p, Mechanism::Super, CAP, &mut rng).unwrap().integrate(&g)
        })
        .collect();
    assert!(within(&samples, m, 4.0), "mean {} vs {m}", mean(&samples));
    let sv = variance(&samples);
    assert!((sv - v).abs() <= 4.0 * variance_std_error(&samples), "var {sv} vs {v}");
}

/// E s^{N_t} for one particle of the linear birth-death process.
fn pgf(s: f64, t: f64, n: usize, p: &ModelParams) -> f64 {
    let r = Rates::new(p, n, Mechanism::Super).unwrap();
    let (b, d, rho) = (r.birth, r.death, r.growth());
    let em = (rho * t).exp_m1();
    let den = b * em + rho;
    let p0 = d * em / den;
    let eta = b * em / den;
    p0 + (1.0 - p0) * (1.0 - eta) * s / (1.0 - eta * s)
}

#[test]
fn laplace_error_shrinks_with_resolution() {
    // Exact Laplace functional of the particle mass, from the pgf, against
    // the superprocess value exp(-v_theta(t)).
    let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1).unwrap();
    for theta in [0.5, 1.0, 2.0] {
        let target = (-total_mass_laplace(theta, 1.0, &p)).exp();
        let err: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&n| (pgf((-theta / n as f64).exp(), 1.0, n, &p).powi(n as i32) - target).abs())
            .collect();
        assert!(err[1] < err[0] && err[2] < err[1], "theta {theta}: {err:?}");
    }
}
