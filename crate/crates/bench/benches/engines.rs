use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use oulab_bench::{origin, plane_params, poly, slow_params};
use oulab_core::backbone::backbone_martingale_path;
use oulab_core::particles::{advance_count, advance_reconstructed, simulate_superprocess, ParticleSystem};
use oulab_core::rng::{domain, stream};
use oulab_core::{Mechanism, MomentConfig, MomentEngine, SemigroupAction};

const CAP: usize = 50_000_000;

fn semigroup(c: &mut Criterion) {
    let p = plane_params();
    let sg = SemigroupAction::new(p);
    let f = poly("x1^6 - 3*x1^2*x2^3 + x2^4 - 2*x1", 2);
    c.bench_function("semigroup_apply_deg6_d2", |b| b.iter(|| sg.apply(black_box(&f), 0.7, p.alpha).unwrap()));
}

fn moments(c: &mut Criterion) {
    let p = slow_params();
    let engine = MomentEngine::new(p, MomentConfig::default());
    let f = poly("x^2 - 0.5", 1);
    let mut g = c.benchmark_group("moments");
    g.sample_size(20);
    g.bench_function("backbone_v4_t2", |b| b.iter(|| engine.backbone_moments(black_box(&f), &[0.3], 2.0, 4).unwrap()));
    g.bench_function("u4_super_t2", |b| b.iter(|| engine.u_moments(black_box(&f), &[0.3], 2.0, 4, Mechanism::Super).unwrap()));
    g.finish();
}

fn particles(c: &mut Criterion) {
    let p = slow_params();
    let nu = origin(1);
    let mut g = c.benchmark_group("particles");
    g.sample_size(20);
    let mut k = 0u64;
    g.bench_function("exact_n100_t3", |b| {
        b.iter(|| {
            k += 1;
            simulate_superprocess(&nu, 3.0, 100, Mechanism::Super, &p, CAP, &mut stream(1, domain::TEST, k)).unwrap()
        })
    });
    let start = ParticleSystem::discretize(&nu, 100);
    g.bench_function("reconstructed_n100_t3", |b| {
        b.iter_batched(
            || {
                k += 1;
                stream(2, domain::TEST, k)
            },
            |mut rng| advance_reconstructed(&start, 3.0, &p, Mechanism::Super, CAP, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.bench_function("count_jump_n100_t5", |b| {
        b.iter(|| {
            k += 1;
            advance_count(100, 5.0, 100, &p, Mechanism::Super, &mut stream(3, domain::TEST, k)).unwrap()
        })
    });
    g.finish();
}

fn backbone(c: &mut Criterion) {
    let p = slow_params();
    let gamma = origin(1);
    let mut k = 0u64;
    let mut g = c.benchmark_group("backbone");
    g.sample_size(20);
    g.bench_function("martingale_path_t6", |b| {
        b.iter(|| {
            k += 1;
            backbone_martingale_path(&gamma, &[3.0, 6.0], &p, CAP, &mut stream(4, domain::TEST, k)).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, semigroup, moments, particles, backbone);
criterion_main!(benches);
