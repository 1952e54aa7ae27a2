use oulab_core::experiment::*;
use oulab_core::Regime;

fn model(alpha: f64, beta: f64) -> ModelSpec {
    ModelSpec { sigma: 1.0, mu: 1.0, alpha: Some(alpha), beta, dim: 1 }
}

fn configs() -> Vec<(Suite, ExperimentConfig)> {
    let mut slow = ExperimentConfig::new(model(1.0, 0.5), 4.0, 10, 120);
    slow.experiment.regime = Some(Regime::Slow);
    let mut fast = ExperimentConfig::new(model(3.0, 1.0), 2.0, 2, 100);
    fast.experiment.f = "x^3 - x".into();
    let mut mass = ExperimentConfig::new(model(1.0, 1.0), 6.0, 20, 150);
    mass.experiment.ks_time = 3.0;
    mass.experiment.limit_draws = 500;
    let mut bridge = ExperimentConfig::new(model(1.0, 1.0), 1.0, 20, 150);
    bridge.experiment.sampler = Sampler::Exact;
    bridge.experiment.nu = vec![Atom { position: vec![0.5], mass: 1.0 }, Atom { position: vec![-1.0], mass: 0.5 }];
    let mut bb = ExperimentConfig::new(model(1.5, 1.0), 3.0, 1, 100);
    bb.experiment.observe = vec![1.0, 2.0];
    bb.experiment.limit_draws = 500;
    vec![(Suite::Regime, slow), (Suite::Regime, fast), (Suite::MassLaw, mass), (Suite::VarianceBridge, bridge), (Suite::Backbone, bb)]
}

fn run(suite: Suite, cfg: &ExperimentConfig) -> ExperimentReport {
    match suite {
        Suite::Regime => run_regime_experiment(cfg),
        Suite::MassLaw => run_mass_law_suite(cfg),
        Suite::VarianceBridge => run_variance_bridge(cfg),
        Suite::Backbone => run_backbone_suite(cfg),
    }
    .unwrap()
}

fn assert_summaries_match(a: &Summary, b: &Summary) {
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, x) in a {
        match (x, &b[k]) {
            (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{k}: {x} vs {y}"),
            (x, y) => assert_eq!(x, y, "{k}"),
        }
    }
}

#[test]
fn stored_rows_reproduce_the_summary() {
    for (suite, cfg) in configs() {
        let rep = run(suite, &cfg);
        let dir = tempfile::tempdir().unwrap();
        rep.write(dir.path()).unwrap();
        let back = ExperimentReport::read(dir.path()).unwrap();
        assert_eq!(back.rows, rep.rows, "{suite:?}");
        assert_eq!(back.config, rep.config);
        assert_eq!(back.verdicts, rep.verdicts);
        assert_summaries_match(&back.summary, &rep.summary);
        assert_summaries_match(&back.resummarize().unwrap(), &rep.summary);
        assert_eq!(back.rows.len(), cfg.experiment.replicas);
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    for (suite, cfg) in configs() {
        let base = run(suite, &cfg);
        for workers in [4, 8] {
            let mut c = cfg.clone();
            c.experiment.workers = workers;
            let rep = run(suite, &c);
            assert_eq!(rep.rows, base.rows, "{suite:?} with {workers} workers");
            assert_eq!(rep.summary, base.summary);
            assert_eq!(rep.manifest.config_hash, base.manifest.config_hash);
            assert_eq!(rep.manifest.workers, workers);
        }
    }
}

#[test]
fn config_hash_tracks_what_matters() {
    let (_, cfg) = configs().remove(0);
    let mut out = cfg.clone();
    out.output.dir = Some("/tmp/elsewhere".into());
    assert_eq!(out.hash(), cfg.hash());
    let mut seeded = cfg.clone();
    seeded.experiment.seed = 1;
    assert_ne!(seeded.hash(), cfg.hash());
    assert_eq!(cfg.hash().len(), 64);
}

#[test]
fn different_seeds_give_different_rows() {
    let (suite, cfg) = configs().remove(0);
    let mut other = cfg.clone();
    other.experiment.seed = 17;
    assert_ne!(run(suite, &cfg).rows, run(suite, &other).rows);
}

#[test]
fn invalid_configs_are_rejected() {
    let (_, cfg) = configs().remove(0);
    let mut few = cfg.clone();
    few.experiment.replicas = 99;
    assert!(run_regime_experiment(&few).is_err());
    let mut late = cfg.clone();
    late.experiment.checkpoint = Some(5.0);
    assert!(run_regime_experiment(&late).is_err());
    let mut bad_f = cfg.clone();
    bad_f.experiment.f = "x^".into();
    assert!(run_regime_experiment(&bad_f).is_err());
    let json = serde_json::to_string(&cfg).unwrap().replace("\"horizon\"", "\"horizn\"");
    assert!(serde_json::from_str::<ExperimentConfig>(&json).is_err());
}
