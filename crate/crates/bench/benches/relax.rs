use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spca_bench::{indefinite, wishart};
use spca_core::model::factor_root;
use spca_core::relax::{smooth_grad, solve_psi, SmoothingParams};

fn smoothing(c: &mut Criterion) {
    let mut group = c.benchmark_group("smooth_grad");
    for n in [30, 100] {
        let z = indefinite(n, 1);
        let params = SmoothingParams::new(n, 0.01).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &z, |b, z| {
            b.iter(|| smooth_grad(z, &params).unwrap())
        });
    }
    group.finish();
}

fn frank_wolfe(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_psi_100_iterations");
    group.sample_size(10);
    for n in [30, 100] {
        let sigma = wishart(n, n / 2, 2);
        let a = factor_root(&sigma).unwrap();
        let params = SmoothingParams::new(n, 0.0125).unwrap();
        let rho = 1.0 / n as f64;
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| solve_psi(a, rho, &params, 1e-12, 100).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, smoothing, frank_wolfe);
criterion_main!(benches);
