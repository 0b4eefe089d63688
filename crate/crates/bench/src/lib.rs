//! Shared fixtures for the benchmarks.

use sliceforge::sched::{run_episode, StaticOrder};
use sliceforge::state::EnvState;
use sliceforge::{generate_scenario, Scenario, ScenarioConfig};

/// Base-size scenario for `seed`.
pub fn base_scenario(seed: u64) -> Scenario {
    generate_scenario(&ScenarioConfig::base().with_seed(seed)).expect("base config is valid")
}

/// State after committing the first `steps` slices that fit, in index order.
pub fn partway_state(scenario: &Scenario, steps: usize) -> EnvState {
    let trace = run_episode(&mut StaticOrder::new((0..scenario.l).collect()), scenario).expect("episode runs");
    let mut state = EnvState::new(scenario);
    for step in trace.steps.iter().take(steps) {
        let placements = sliceforge::mapper::map_slice(&state, step.action).expect("slice was feasible");
        state.commit_slice(step.action, &placements).expect("commit succeeds");
    }
    state
}
