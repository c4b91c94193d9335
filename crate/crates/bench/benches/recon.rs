use criterion::{criterion_group, criterion_main, Criterion};
use fanscatter_bench::{bench_projector, Workload};
use fanscatter_core::recon::{absolute_beta, initial_level, sensitivity};
use fanscatter_core::{
    build_partition, em_iterate, osem_iterate, LinearOperator, Neighborhood, ProjectorConfig, ReconOptions, Regularizer, Scope,
};
use std::hint::black_box;

fn iterations(c: &mut Criterion) {
    let p = bench_projector(ProjectorConfig::all_optimizations());
    let work = Workload::new(&p);
    let g = p.geometry().clone();
    let meas = &work.data.measurements;
    let b1 = sensitivity(&p, Scope::Full).unwrap();
    let level = initial_level(&b1, meas).unwrap();
    let nb = Neighborhood::new(g.object_nx, g.object_ny, p.grid().len(), g.object_dx, g.object_dy()).unwrap();
    let reg = Regularizer::new(absolute_beta(0.05, &b1, level), 0.01 * level, nb).unwrap();
    let f0 = vec![level; p.object_len()];
    let opts = ReconOptions {
        iterations: 1,
        track_objective: false,
        ..ReconOptions::default()
    };
    let partition = build_partition(g.detector_rows, g.detector_cols, g.translation_step, 8).unwrap();

    let mut group = c.benchmark_group("recon");
    group.sample_size(10);
    group.bench_function("EM iteration", |b| {
        b.iter(|| em_iterate(&p, black_box(&f0), meas, &reg, &opts).unwrap())
    });
    group.bench_function("OSEM iteration", |b| {
        b.iter(|| osem_iterate(&p, black_box(&f0), meas, &reg, &partition, &opts).unwrap())
    });
    group.finish();
}

fn partition(c: &mut Criterion) {
    c.bench_function("partition 192x256", |b| {
        b.iter(|| build_partition(192, 256, 16, 8).unwrap().check())
    });
}

criterion_group!(benches, iterations, partition);
criterion_main!(benches);
