use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fanscatter_bench::{bench_projector, Workload};
use fanscatter_core::{build_partition, ProjectorConfig, Scope, Variant};
use std::hint::black_box;

fn forward(c: &mut Criterion) {
    let base = bench_projector(ProjectorConfig::default());
    let work = Workload::new(&base);
    let mut group = c.benchmark_group("forward");
    group.sample_size(10);
    group.bench_function("naive", |b| {
        b.iter(|| base.forward_naive(black_box(&work.phantom), Scope::Full).unwrap())
    });
    for v in Variant::ALL {
        let p = base.reconfigured(base.config().with_variant(v)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(v), &p, |b, p| {
            b.iter(|| p.forward(black_box(&work.phantom), Scope::Full).unwrap())
        });
    }
    group.finish();
}

fn backward(c: &mut Criterion) {
    let base = bench_projector(ProjectorConfig::default());
    let work = Workload::new(&base);
    let mut group = c.benchmark_group("backward");
    group.sample_size(10);
    for v in [Variant::NO, Variant::SAI, Variant::OOT, Variant::AO] {
        let p = base.reconfigured(base.config().with_variant(v)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(v), &p, |b, p| {
            b.iter(|| p.backward(black_box(work.noiseless()), Scope::Full).unwrap())
        });
    }
    group.finish();
}

fn subsets(c: &mut Criterion) {
    let p = bench_projector(ProjectorConfig::all_optimizations());
    let work = Workload::new(&p);
    let g = p.geometry();
    let masks = build_partition(g.detector_rows, g.detector_cols, g.translation_step, 8)
        .unwrap()
        .masks();
    c.bench_function("forward/AO all subsets", |b| {
        b.iter(|| {
            for m in &masks {
                black_box(p.forward(&work.phantom, Scope::Subset(m)).unwrap());
            }
        })
    });
}

fn tables(c: &mut Criterion) {
    let base = bench_projector(ProjectorConfig::default());
    let mut group = c.benchmark_group("setup");
    group.sample_size(10);
    group.bench_function("AO precompute", |b| {
        b.iter(|| base.reconfigured(ProjectorConfig::all_optimizations()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, forward, backward, subsets, tables);
criterion_main!(benches);
