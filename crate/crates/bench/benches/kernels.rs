use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use hdgauss_bench::spd_fixture;
use hdgauss_core::bootstrap::{efron_stats, wild_stats};
use hdgauss_core::dgp::sample;
use hdgauss_core::gaussball::{imhof_cdf, to_weighted_chi2};
use hdgauss_core::mc::ball_distance;
use hdgauss_core::spectral::sym_eigen;
use hdgauss_core::{DgpSpec, Marginal, MultiplierDist};

fn bench_sym_eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("sym_eigen");
    for d in [10usize, 50, 200] {
        let m = spd_fixture(d);
        g.bench_with_input(BenchmarkId::from_parameter(d), &m, |b, m| {
            b.iter(|| sym_eigen(black_box(m), 1e-12).unwrap())
        });
    }
    g.finish();
}

fn bench_imhof(c: &mut Criterion) {
    let mut g = c.benchmark_group("imhof_cdf");
    for d in [2usize, 20, 100] {
        let sigma = spd_fixture(d);
        let w = to_weighted_chi2(&sigma, &vec![0.0; d]).unwrap();
        let x = sigma.trace();
        g.bench_with_input(BenchmarkId::from_parameter(d), &w, |b, w| {
            b.iter(|| imhof_cdf(black_box(w), x, 1e-9).unwrap())
        });
    }
    g.finish();
}

fn bench_ks_distance(c: &mut Criterion) {
    let mut g = c.benchmark_group("ball_distance");
    g.sample_size(10);
    for marginal in [Marginal::Gaussian, Marginal::Rademacher, Marginal::UniformStd] {
        let spec = DgpSpec::iid(1000, 50, marginal);
        g.bench_function(marginal.name(), |b| b.iter(|| ball_distance(black_box(&spec), 10_000, 1, 7).unwrap()));
    }
    g.finish();
}

fn bench_bootstrap(c: &mut Criterion) {
    let mut g = c.benchmark_group("bootstrap");
    g.sample_size(10);
    let x = sample(&DgpSpec::iid(500, 20, Marginal::Gaussian), 3).unwrap();
    g.bench_function("efron_b500", |b| b.iter(|| efron_stats(black_box(&x), 500, 11).unwrap()));
    g.bench_function("wild_gaussian_b500", |b| {
        b.iter(|| wild_stats(black_box(&x), 500, MultiplierDist::Gaussian, 11).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_sym_eigen, bench_imhof, bench_ks_distance, bench_bootstrap);
criterion_main!(benches);
