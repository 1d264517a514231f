use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use esbo_core::acquisition::{maximize_acquisition, AcquisitionConfig, AcquisitionState};
use esbo_core::gp::FitOptions;
use esbo_core::{gp, make_task, BoxDomain, ParamVector, TaskId, TrainedGp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn training_set(domain: &BoxDomain, n: usize, seed: u64) -> Vec<(ParamVector, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = domain.sample_uniform(&mut rng);
            let y = x
                .iter()
                .enumerate()
                .map(|(i, v)| (v - 0.1 * i as f64).powi(2))
                .sum::<f64>()
                .sin();
            (x, y)
        })
        .collect()
}

fn fitted(n: usize) -> TrainedGp {
    let domain = make_task(TaskId::CartpoleSf).domain().clone();
    gp::fit(
        &domain,
        &training_set(&domain, n, 1),
        &FitOptions::default(),
    )
    .expect("fit")
}

fn fit(c: &mut Criterion) {
    let domain = make_task(TaskId::CartpoleSf).domain().clone();
    let mut g = c.benchmark_group("gp_fit");
    g.sample_size(10);
    for n in [25, 100, 180] {
        let pts = training_set(&domain, n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &pts, |b, pts| {
            b.iter(|| gp::fit(&domain, black_box(pts), &FitOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn posterior(c: &mut Criterion) {
    let gp = fitted(100);
    let q = vec![0.5; 4];
    c.bench_function("gp_posterior_n100", |b| {
        b.iter(|| gp.posterior_unit(black_box(&q)))
    });
}

fn acquisition(c: &mut Criterion) {
    let gp = fitted(100);
    let cfg = AcquisitionConfig::default();
    let mut g = c.benchmark_group("mes");
    g.sample_size(10);
    g.bench_function("sample_max_values_n100", |b| {
        b.iter(|| AcquisitionState::new(&gp, &cfg, &mut ChaCha8Rng::seed_from_u64(3)))
    });
    let state = AcquisitionState::new(&gp, &cfg, &mut ChaCha8Rng::seed_from_u64(3));
    g.bench_function("maximize_n100", |b| {
        b.iter(|| maximize_acquisition(&state, &mut ChaCha8Rng::seed_from_u64(4)))
    });
    g.finish();
}

criterion_group!(benches, fit, posterior, acquisition);
criterion_main!(benches);
