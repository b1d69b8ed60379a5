use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use towerforge::partition::Labeling;
use towerforge::{
    build_k_standard, hopf_ratio_scan, iterated_join, refine_k_standard, sample_points, HorizonPlan,
    IntervalSet,
};
use towerforge_bench::{hajian_kakutani, halves, unit};

fn stage_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("stage_build");
    for depth in [6, 8, 10] {
        g.bench_with_input(BenchmarkId::from_parameter(depth), &depth, |b, &d| {
            b.iter(|| hajian_kakutani(black_box(d)))
        });
    }
    g.finish();
}

fn k_standard(c: &mut Criterion) {
    let sys = hajian_kakutani(8);
    let mut g = c.benchmark_group("build_k_standard");
    for n in [3, 8, 20] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| build_k_standard(&sys, &unit(), black_box(n), 8).unwrap())
        });
    }
    g.finish();
    let t1 = build_k_standard(&sys, &unit(), 3, 8).unwrap();
    c.bench_function("refine_k_standard/10", |b| {
        b.iter(|| refine_k_standard(&sys, &t1, &unit(), black_box(10), 8).unwrap())
    });
}

fn names_and_joins(c: &mut Criterion) {
    let sys = hajian_kakutani(9);
    let alpha = halves();
    let st = sys.stage(9).unwrap();
    c.bench_function("labeling/depth9", |b| b.iter(|| Labeling::new(st, black_box(&alpha)).unwrap()));
    let mut g = c.benchmark_group("iterated_join");
    for n in [1i64, 3, 5] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| iterated_join(&sys, &alpha, -n, n, 9).unwrap())
        });
    }
    g.finish();
}

fn hopf_scan(c: &mut Criterion) {
    let sys = hajian_kakutani(8);
    let half = IntervalSet::from_fracs(&[(0, 1, 1, 2)]).unwrap();
    let samples = sample_points(&unit(), 32);
    c.bench_function("hopf_ratio_scan/32", |b| {
        b.iter(|| hopf_ratio_scan(&sys, &half, &unit(), &samples, &HorizonPlan::LargestFeasible, 8).unwrap())
    });
}

criterion_group!(benches, stage_build, k_standard, names_and_joins, hopf_scan);
criterion_main!(benches);
