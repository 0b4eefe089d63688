//! Slice schedulers, the four demand-sorted baselines and the episode runner.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::{self, PendingSet};
use crate::scenario::{Rb, Scenario};
use crate::state::{Assignment, EnvState, StateSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    /// Every VNF of every slice placed in one global descending-demand pass.
    All,
    /// Slices by descending largest VNF demand.
    Max,
    /// Slices by descending smallest VNF demand.
    Min,
    /// Slices by descending total demand.
    Total,
    /// Learned scheduler.
    Drn,
}

impl SchedulerKind {
    pub const BASELINES: [SchedulerKind; 4] =
        [SchedulerKind::All, SchedulerKind::Max, SchedulerKind::Min, SchedulerKind::Total];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::All => "all",
            SchedulerKind::Max => "max",
            SchedulerKind::Min => "min",
            SchedulerKind::Total => "total",
            SchedulerKind::Drn => "drn",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(SchedulerKind::All),
            "max" => Ok(SchedulerKind::Max),
            "min" => Ok(SchedulerKind::Min),
            "total" => Ok(SchedulerKind::Total),
            "drn" | "daa" => Ok(SchedulerKind::Drn),
            other => Err(Error::Config(format!("unknown scheduler '{other}'"))),
        }
    }
}

/// Static slice order of the Max, Min and Total baselines. Descending key, ties by index.
pub fn baseline_order(kind: SchedulerKind, scenario: &Scenario) -> Result<Vec<usize>> {
    let key = |row: &Vec<Rb>| -> u64 {
        match kind {
            SchedulerKind::Max => row.iter().copied().max().unwrap_or(0) as u64,
            SchedulerKind::Min => row.iter().copied().min().unwrap_or(0) as u64,
            SchedulerKind::Total => row.iter().map(|&d| d as u64).sum(),
            _ => unreachable!(),
        }
    };
    if !matches!(kind, SchedulerKind::Max | SchedulerKind::Min | SchedulerKind::Total) {
        return Err(Error::Misuse(format!("{kind} has no static slice order")));
    }
    let keys: Vec<u64> = scenario.demands.iter().map(key).collect();
    let mut order: Vec<usize> = (0..scenario.l).collect();
    order.sort_by(|&a, &b| keys[b].cmp(&keys[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Outcome of the global-VNF-order baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllOutcome {
    /// (slice, vnf) in the order they were attempted.
    pub order: Vec<(usize, usize)>,
    pub accommodated: Vec<bool>,
    pub count: usize,
    pub assignments: Vec<Assignment>,
    pub avail: Vec<Rb>,
}

/// Places every VNF individually in descending demand order (ties by slice, then VNF).
/// Failed VNFs stay unmapped and nothing is rolled back.
pub fn run_baseline_all(scenario: &Scenario) -> AllOutcome {
    let mut order: Vec<(usize, usize)> =
        (0..scenario.l).flat_map(|i| (0..scenario.s).map(move |j| (i, j))).collect();
    let demand = |&(i, j): &(usize, usize)| scenario.demands[i][j];
    order.sort_by(|a, b| demand(b).cmp(&demand(a)).then(a.cmp(b)));

    let mut remaining = PendingSet::new(order.iter().map(demand));
    let mut avail = scenario.capacities.clone();
    let mut placed = vec![0usize; scenario.l];
    let mut assignments = Vec::new();
    for &(i, j) in &order {
        let d = scenario.demands[i][j];
        remaining.remove(d);
        if let Some(score) = mapper::select_node(&avail, d, &remaining) {
            avail[score.node] -= d;
            placed[i] += 1;
            assignments.push(Assignment { slice: i, vnf: j, node: score.node, amount: d });
        }
    }
    let accommodated: Vec<bool> = placed.iter().map(|&c| c == scenario.s).collect();
    let count = accommodated.iter().filter(|&&a| a).count();
    AllOutcome { order, accommodated, count, assignments, avail }
}

/// Chooses the next slice among the feasible ones.
pub trait SlicePicker {
    /// `feasible` has at least one `true` entry.
    fn pick(&mut self, state: &EnvState, feasible: &[bool]) -> Result<usize>;
}

/// First feasible slice of a fixed order; blocked slices are skipped.
#[derive(Debug, Clone)]
pub struct StaticOrder {
    order: Vec<usize>,
}

impl StaticOrder {
    pub fn new(order: Vec<usize>) -> Self {
        StaticOrder { order }
    }

    pub fn baseline(kind: SchedulerKind, scenario: &Scenario) -> Result<Self> {
        baseline_order(kind, scenario).map(Self::new)
    }
}

impl SlicePicker for StaticOrder {
    fn pick(&mut self, _state: &EnvState, feasible: &[bool]) -> Result<usize> {
        self.order
            .iter()
            .copied()
            .find(|&i| feasible.get(i).copied().unwrap_or(false))
            .ok_or(Error::NoFeasibleAction)
    }
}

/// With probability `epsilon` picks a uniformly random feasible slice,
/// otherwise defers to the wrapped picker.
pub struct EpsilonGreedy<'a, P: ?Sized, R> {
    pub inner: &'a mut P,
    pub epsilon: f64,
    pub rng: &'a mut R,
}

impl<P: SlicePicker + ?Sized, R: Rng> SlicePicker for EpsilonGreedy<'_, P, R> {
    fn pick(&mut self, state: &EnvState, feasible: &[bool]) -> Result<usize> {
        if self.epsilon > 0.0 && self.rng.gen::<f64>() < self.epsilon {
            let options: Vec<usize> = (0..feasible.len()).filter(|&i| feasible[i]).collect();
            if options.is_empty() {
                return Err(Error::NoFeasibleAction);
            }
            return Ok(options[self.rng.gen_range(0..options.len())]);
        }
        self.inner.pick(state, feasible)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    /// Observation before the action.
    pub state: StateSnapshot,
    pub feasible: Vec<bool>,
    pub action: usize,
    /// Accommodated slices after the action.
    pub n_r_after: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<EpisodeStep>,
    pub terminal_reached: bool,
    /// Per-step returns, filled in by the trainer.
    pub returns: Vec<f64>,
    pub final_state: EnvState,
}

impl EpisodeTrace {
    /// Slices accommodated when the episode ended.
    pub fn accommodated(&self) -> usize {
        self.steps.last().map_or(0, |s| s.n_r_after)
    }
}

/// Runs one episode: recompute feasibility for every pending slice, stop when
/// none is feasible, otherwise let `picker` choose and commit its mapping.
pub fn run_episode(picker: &mut (impl SlicePicker + ?Sized), scenario: &Scenario) -> Result<EpisodeTrace> {
    let mut state = EnvState::new(scenario);
    let mut steps = Vec::with_capacity(scenario.l);
    loop {
        let mut options = mapper::feasible_placements(&state);
        let feasible: Vec<bool> = options.iter().map(Option::is_some).collect();
        if !feasible.iter().any(|&f| f) {
            break;
        }
        let action = picker.pick(&state, &feasible)?;
        let placements = options
            .get_mut(action)
            .and_then(Option::take)
            .ok_or_else(|| Error::Misuse(format!("picker chose infeasible slice {action}")))?;
        let snapshot = state.snapshot();
        state.commit_slice(action, &placements)?;
        steps.push(EpisodeStep {
            state: snapshot,
            feasible,
            action,
            n_r_after: state.accommodated_count(),
        });
    }
    Ok(EpisodeTrace { steps, terminal_reached: true, returns: Vec::new(), final_state: state })
}
