use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sliceforge::mapper::{feasible_placements, map_slice, select_node, PendingSet};
use sliceforge::sched::{run_baseline_all, run_episode, SchedulerKind, StaticOrder};
use sliceforge_bench::{base_scenario, partway_state};

fn mapper(c: &mut Criterion) {
    let scenario = base_scenario(1);
    let state = partway_state(&scenario, 8);
    let pending = PendingSet::from_state(&state);

    c.bench_function("select_node/base", |b| b.iter(|| select_node(black_box(&state.avail), black_box(7), &pending)));
    let slice = state.pending_slices().next().expect("some slice pending");
    c.bench_function("map_slice/base", |b| b.iter(|| map_slice(black_box(&state), slice)));
    c.bench_function("feasible_placements/base", |b| b.iter(|| feasible_placements(black_box(&state))));
}

fn episodes(c: &mut Criterion) {
    let scenario = base_scenario(2);
    for kind in [SchedulerKind::Max, SchedulerKind::Total] {
        c.bench_function(&format!("episode/{kind}/base"), |b| {
            b.iter(|| run_episode(&mut StaticOrder::baseline(kind, &scenario).unwrap(), black_box(&scenario)).unwrap())
        });
    }
    c.bench_function("episode/all/base", |b| b.iter(|| run_baseline_all(black_box(&scenario))));
}

criterion_group!(benches, mapper, episodes);
criterion_main!(benches);
