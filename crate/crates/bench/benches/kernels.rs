use std::hint::black_box;

use betacount::fredholm::{variance_trace, Beta2Determinant, BlockDeterminant, ScalarReduction};
use betacount::matrix_kernels::{assemble_block_kernel, build_operator_matrices, build_s1};
use betacount::orthopoly::{build_system, default_top, project_kernel, required_nodes};
use betacount::potential::{equilibrium_density, solve_one_cut_support};
use betacount::PolynomialPotential;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn equilibrium(c: &mut Criterion) {
    let v = PolynomialPotential::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]).unwrap();
    c.bench_function("one_cut_support_quartic", |b| {
        b.iter(|| solve_one_cut_support(black_box(&v)).unwrap())
    });
    let s = solve_one_cut_support(&v).unwrap();
    c.bench_function("equilibrium_density_quartic", |b| {
        b.iter(|| equilibrium_density(black_box(&v), &s).unwrap())
    });
}

fn beta2(c: &mut Criterion) {
    let v = PolynomialPotential::gaussian();
    let mut group = c.benchmark_group("beta2");
    group.sample_size(10);
    for n in [100usize, 400] {
        group.bench_with_input(BenchmarkId::new("build_system", n), &n, |b, &n| {
            b.iter(|| build_system(&v, n, default_top(&v, n)).unwrap())
        });
        let sys = build_system(&v, n, default_top(&v, n)).unwrap();
        let nq = required_nodes(&sys, -1.0, 1.0);
        group.bench_with_input(BenchmarkId::new("determinant", n), &n, |b, &n| {
            b.iter(|| {
                let k = project_kernel(&sys, -1.0, 1.0, nq).unwrap();
                let det = Beta2Determinant::new(&k, n);
                (det.eval(1.0).unwrap().log_phi, variance_trace(&k).unwrap())
            })
        });
    }
    group.finish();
}

fn beta1(c: &mut Criterion) {
    let v = PolynomialPotential::gaussian();
    let mut group = c.benchmark_group("beta1");
    group.sample_size(10);
    for n in [16usize, 32] {
        let sys = build_system(&v, n, default_top(&v, n)).unwrap();
        let ops = build_operator_matrices(&sys).unwrap();
        let kernel = build_s1(&ops).unwrap();
        let nq = required_nodes(&sys, -1.0, 1.0).max(48);
        group.bench_with_input(BenchmarkId::new("block", n), &n, |b, &n| {
            b.iter(|| {
                let block = assemble_block_kernel(&kernel, -1.0, 1.0, nq).unwrap();
                BlockDeterminant::new(&block, n).unwrap().eval(1.0).unwrap().log_phi
            })
        });
        group.bench_with_input(BenchmarkId::new("scalar_reduced", n), &n, |b, _| {
            b.iter(|| {
                ScalarReduction::new(&kernel, -1.0, 1.0, nq)
                    .unwrap()
                    .eval(1.0)
                    .unwrap()
                    .log_phi
            })
        });
    }
    group.finish();
}

criterion_group!(benches, equilibrium, beta2, beta1);
criterion_main!(benches);
