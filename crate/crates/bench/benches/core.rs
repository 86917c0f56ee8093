use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use jumpflow::analysis::ring_fixture;
use jumpflow::spaces::{bump_density, delta_density};
use jumpflow::{evolve, solve_geodesic, Mean, SemigroupBackend, SolverConfig};

fn log_mean(c: &mut Criterion) {
    let pairs: Vec<(f64, f64)> = (1..=1000)
        .map(|i| (i as f64 * 1e-3, 1.0 + (i % 7) as f64 * 1e-6))
        .collect();
    c.bench_function("log_mean_1000", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &(s, t) in &pairs {
                acc += Mean::Logarithmic.theta(black_box(s), black_box(t));
            }
            acc
        })
    });
}

fn semigroup(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolve");
    for n in [32usize, 128] {
        let kernel = ring_fixture(n, 1.0).unwrap();
        let rho = delta_density(kernel.space(), 0).unwrap();
        let dense = SemigroupBackend::dense(&kernel).unwrap();
        let spectral = SemigroupBackend::spectral(&kernel).unwrap();
        group.bench_with_input(BenchmarkId::new("dense", n), &n, |b, _| {
            b.iter(|| evolve(&rho, 0.5, &dense).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("spectral", n), &n, |b, _| {
            b.iter(|| evolve(&rho, 0.5, &spectral).unwrap())
        });
    }
    group.finish();
}

fn geodesic(c: &mut Criterion) {
    let mut group = c.benchmark_group("geodesic");
    group.sample_size(10);
    let kernel = ring_fixture(16, 1.0).unwrap();
    let space = kernel.space();
    let mu0 = bump_density(space, 3, 0.1, 0.05).unwrap();
    let mu1 = bump_density(space, 10, 0.16, 0.05).unwrap();
    for k in [16usize, 32] {
        let config = SolverConfig::default().with_intervals(k);
        group.bench_with_input(BenchmarkId::new("ring16", k), &k, |b, _| {
            b.iter(|| solve_geodesic(&mu0, &mu1, &kernel, Mean::Logarithmic, &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, log_mean, semigroup, geodesic);
criterion_main!(benches);
