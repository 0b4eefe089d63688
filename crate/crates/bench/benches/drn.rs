use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sliceforge::drn::{DrnConfig, DrnParams, DrnPicker};
use sliceforge::sched::run_episode;
use sliceforge::trainer::{compute_returns, train_step, EpisodeRecord, RewardConfig};
use sliceforge::{generate_scenario, ScenarioConfig};
use sliceforge_bench::{base_scenario, partway_state};

fn forward(c: &mut Criterion) {
    let scenario = base_scenario(3);
    let params = DrnParams::build(DrnConfig::for_scenario(&ScenarioConfig::base()), 0).unwrap();
    let state = partway_state(&scenario, 5);
    c.bench_function("drn_forward/base", |b| b.iter(|| params.forward_state(black_box(&state)).unwrap()));
    c.bench_function("drn_episode/base", |b| {
        b.iter(|| run_episode(&mut DrnPicker { params: &params }, black_box(&scenario)).unwrap())
    });
}

fn update(c: &mut Criterion) {
    let cfg = ScenarioConfig::mini();
    let mut params = DrnParams::build(DrnConfig::for_scenario(&cfg), 0).unwrap();
    let records: Vec<EpisodeRecord> = (0..32)
        .map(|seed| {
            let scenario = generate_scenario(&cfg.with_seed(seed)).unwrap();
            let trace = run_episode(&mut DrnPicker { params: &params }, &scenario).unwrap();
            let targets = compute_returns(&trace, &RewardConfig::default(), cfg.l);
            EpisodeRecord::from_trace(&trace, targets)
        })
        .collect();
    let batch: Vec<&EpisodeRecord> = records.iter().collect();
    c.bench_function("train_step/mini/32_episodes", |b| b.iter(|| train_step(&mut params, black_box(&batch), 1e-6).unwrap()));
}

criterion_group!(benches, forward, update);
criterion_main!(benches);
