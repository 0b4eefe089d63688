//! Simulation, greedy mapping and learned scheduling for embedding RAN-slice
//! VNFs onto a substrate network.

pub mod drn;
pub mod error;
pub mod harness;
pub mod mapper;
pub mod nn;
pub mod rng;
pub mod scenario;
pub mod sched;
pub mod state;
pub mod trainer;

pub use error::{Error, Result};
pub use scenario::{generate_scenario, Rb, Scenario, ScenarioConfig};
pub use sched::{run_baseline_all, run_episode, EpisodeTrace, SchedulerKind};
pub use state::{EnvState, Placement};
pub use drn::{load_checkpoint, save_checkpoint, DrnConfig, DrnParams};
pub use harness::{evaluate, export_results, sweep, Axis, EvalResult, ResultRow, ResultTable, Scheduler, SweepSpec};
pub use trainer::{train, RewardConfig, TrainConfig, TrainLog};
