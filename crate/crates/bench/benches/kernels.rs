use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use szilard_core::optimal::{optimize_kappa_for, KappaSearch};
use szilard_core::sim::run_protocol_batch;
use szilard_core::stats::{fluctuation_on_schedule, work_on_schedule};
use szilard_core::{build_optimal_protocol, naive_ramp, Branch, ControlSchedule, RateModel, DEFAULT_GRID_POINTS};

fn optimal(c: &mut Criterion) {
    let search = KappaSearch::default();
    c.bench_function("optimize_kappa γτ=1", |b| {
        b.iter(|| optimize_kappa_for(black_box(1.0), Branch::Empty, &search).unwrap())
    });
    c.bench_function("build_optimal_protocol γτ=1, 256 samples", |b| {
        b.iter(|| build_optimal_protocol(black_box(1.0), 256, Branch::Occupied).unwrap())
    });
}

fn deterministic(c: &mut Criterion) {
    let model = RateModel::default();
    let protocol = naive_ramp(1.0, Branch::Empty).unwrap();
    let schedule = ControlSchedule::from_protocol(&protocol, DEFAULT_GRID_POINTS).unwrap();
    c.bench_function("occupations, 4096 steps", |b| {
        b.iter(|| model.occupations(black_box(&schedule), 0.0))
    });
    c.bench_function("work, 4096 steps", |b| {
        b.iter(|| work_on_schedule(&model, black_box(&schedule), 0.0))
    });
    c.bench_function("fluctuation integral, 4096 steps", |b| {
        b.iter(|| fluctuation_on_schedule(&model, black_box(&schedule), 0.0))
    });
}

fn stochastic(c: &mut Criterion) {
    let model = RateModel::default();
    let protocol = naive_ramp(1.0, Branch::Occupied).unwrap();
    let mut group = c.benchmark_group("trajectories");
    group.sample_size(20);
    group.bench_function("1000 cycles, 1024 steps", |b| {
        b.iter(|| run_protocol_batch(&model, black_box(&protocol), 1024, 1000, 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, optimal, deterministic, stochastic);
criterion_main!(benches);
