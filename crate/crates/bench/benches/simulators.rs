use std::hint::black_box;

use arclift_core::coalescent::simulate_lambda_coalescent;
use arclift_core::crp_gem::sample_crp;
use arclift_core::lifting::simulate_lift_chain;
use arclift_core::port_trees::{enumerate_ports, sample_lpat_n};
use arclift_core::{LambdaMeasure, Partition, RateTable};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lpat(c: &mut Criterion) {
    let mut g = c.benchmark_group("sample_lpat");
    for n in [8u32, 64, 512] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| sample_lpat_n(n, &mut rng).unwrap())
        });
    }
    g.finish();
}

fn lift_chain(c: &mut Criterion) {
    let mut g = c.benchmark_group("lift_chain");
    for n in [8u32, 64, 256] {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| {
                let tree = sample_lpat_n(n, &mut rng).unwrap();
                simulate_lift_chain(&tree, &mut rng, None, false)
            })
        });
    }
    g.finish();
}

fn coalescent(c: &mut Criterion) {
    let mut g = c.benchmark_group("lambda_coalescent");
    for (name, measure) in [("arcsine", LambdaMeasure::arcsine()), ("kingman", LambdaMeasure::kingman())] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        g.bench_function(BenchmarkId::new(name, 64), |b| {
            b.iter(|| simulate_lambda_coalescent(64, &measure, &mut rng, None).unwrap())
        });
    }
    g.finish();
}

fn rate_table(c: &mut Criterion) {
    let mut g = c.benchmark_group("rate_table");
    g.bench_function("arcsine_exact_32", |b| {
        b.iter(|| RateTable::build(&LambdaMeasure::arcsine(), black_box(32)).unwrap())
    });
    let beta = LambdaMeasure::beta(0.7, 1.3).unwrap();
    g.bench_function("beta_quadrature_32", |b| b.iter(|| RateTable::build(&beta, black_box(32)).unwrap()));
    g.finish();
}

fn enumeration(c: &mut Criterion) {
    let pi = Partition::discrete(7).unwrap();
    c.bench_function("enumerate_ports_7", |b| b.iter(|| enumerate_ports(black_box(&pi)).unwrap().len()));
}

fn crp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    c.bench_function("sample_crp_64", |b| b.iter(|| sample_crp(64, 0.5, 0.5, &mut rng).unwrap()));
}

criterion_group!(benches, lpat, lift_chain, coalescent, rate_table, enumeration, crp);
criterion_main!(benches);
