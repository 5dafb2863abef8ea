use std::hint::black_box;

use betacount::sampler::{chain_rng, MetropolisChain, TridiagonalSampler};
use betacount::{Beta, PolynomialPotential};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn tridiagonal(c: &mut Criterion) {
    let mut group = c.benchmark_group("tridiagonal");
    for n in [100usize, 400] {
        let s = TridiagonalSampler::new(2.0, n).unwrap();
        let mut rng = chain_rng(1, 0);
        group.bench_with_input(BenchmarkId::new("eigenvalues", n), &n, |b, _| {
            b.iter(|| s.sample(black_box(&mut rng)))
        });
        group.bench_with_input(BenchmarkId::new("counts_x100", n), &n, |b, _| {
            b.iter(|| s.counts(-1.0, 1.0, 100, black_box(3)))
        });
    }
    group.finish();
}

fn metropolis(c: &mut Criterion) {
    let v = PolynomialPotential::new(vec![0.0, 0.0, 0.0, 0.0, 0.25]).unwrap();
    let mut group = c.benchmark_group("metropolis_sweep");
    for n in [50usize, 200] {
        let mut chain = MetropolisChain::new(&v, Beta::One, n, 7, 0).unwrap();
        chain.burn_in(20);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| chain.sweep()));
    }
    group.finish();
}

criterion_group!(benches, tridiagonal, metropolis);
criterion_main!(benches);
