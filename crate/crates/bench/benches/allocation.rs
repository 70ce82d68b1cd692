use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hybrid_alloc::allocator::{allocator_step, extended_allocator_step, redistribute, AllocatorState};
use hybrid_alloc::fes::{invert_recruitment, FesModel};
use hybrid_alloc::sim::{builtin_scenario, run};
use hybrid_alloc::JointTorque;
use hybrid_alloc_bench::{extended_state, step_scenario, two_channel_params};

fn two_channel(c: &mut Criterion) {
    let params = two_channel_params();
    let nominal = JointTorque::new(0.0, 0.0, 4.0);
    let state = AllocatorState::new([1.0, 0.0]);
    c.bench_function("allocator_step", |b| {
        b.iter(|| allocator_step(black_box(&state), black_box(nominal), &params, 60.0, 1e-3).unwrap())
    });
    c.bench_function("redistribute", |b| {
        b.iter(|| redistribute(black_box(nominal), black_box(&state)))
    });
}

fn extended(c: &mut Criterion) {
    let mut group = c.benchmark_group("extended_allocator_step");
    for n in [1, 4, 16] {
        let st = extended_state(n);
        let mut nominal = vec![0.0; 2 * n];
        nominal.push(4.0);
        group.bench_with_input(BenchmarkId::from_parameter(2 * n), &n, |b, _| {
            b.iter(|| extended_allocator_step(black_box(&st), black_box(&nominal), 60.0, 1e-3).unwrap())
        });
    }
    group.finish();
}

fn inversion(c: &mut Criterion) {
    let m = FesModel::synthetic_flexor();
    c.bench_function("invert_recruitment", |b| {
        b.iter(|| invert_recruitment(&m, black_box(0.37), black_box(52.0)))
    });
}

fn closed_loop(c: &mut Criterion) {
    let mut group = c.benchmark_group("closed_loop");
    group.sample_size(10);
    let short = step_scenario(1.0);
    group.bench_function("isometric_1s", |b| b.iter(|| run(black_box(&short)).unwrap()));
    let tracking = builtin_scenario("tracking").unwrap().unwrap();
    group.bench_function("tracking_full", |b| b.iter(|| run(black_box(&tracking)).unwrap()));
    group.finish();
}

criterion_group!(benches, two_channel, extended, inversion, closed_loop);
criterion_main!(benches);
