//! Mutable episode state and the transition applied when a slice is accommodated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Rb, Scenario};

/// One VNF-to-node mapping in the assignment ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub slice: usize,
    pub vnf: usize,
    pub node: usize,
    pub amount: Rb,
}

/// A (vnf index, node index) pair produced by the mapper for one slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub vnf: usize,
    pub node: usize,
}

impl Placement {
    pub fn new(vnf: usize, node: usize) -> Self {
        Placement { vnf, node }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    /// Number of slices committed so far.
    pub t: usize,
    /// Remaining capacity per node.
    pub avail: Vec<Rb>,
    /// Remaining demands; rows of accommodated slices are zero.
    pub pending: Vec<Vec<Rb>>,
    pub accommodated: Vec<bool>,
    pub assignments: Vec<Assignment>,
}

impl EnvState {
    /// Fresh episode state for `scenario`.
    pub fn new(scenario: &Scenario) -> Self {
        EnvState {
            t: 0,
            avail: scenario.capacities.clone(),
            pending: scenario.demands.clone(),
            accommodated: vec![false; scenario.l],
            assignments: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.avail.len()
    }

    pub fn l(&self) -> usize {
        self.pending.len()
    }

    pub fn s(&self) -> usize {
        self.pending.first().map_or(0, Vec::len)
    }

    pub fn accommodated_count(&self) -> usize {
        self.accommodated.iter().filter(|&&a| a).count()
    }

    pub fn is_pending(&self, slice: usize) -> bool {
        !self.accommodated[slice]
    }

    pub fn pending_slices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.l()).filter(move |&i| !self.accommodated[i])
    }

    /// Demands of every VNF of every pending slice.
    pub fn pending_demands(&self) -> Vec<Rb> {
        self.pending_slices().flat_map(|i| self.pending[i].iter().copied()).collect()
    }

    /// Applies the placements of `slice`. On error the state is left untouched.
    pub fn commit_slice(&mut self, slice: usize, placements: &[Placement]) -> Result<()> {
        let fail = |reason: String| Error::Commit { slice, reason };
        if slice >= self.l() {
            return Err(fail(format!("slice index out of range (l = {})", self.l())));
        }
        if self.accommodated[slice] {
            return Err(fail("already accommodated".into()));
        }
        let s = self.s();
        if placements.len() != s {
            return Err(fail(format!("expected {s} placements, got {}", placements.len())));
        }
        let mut seen = vec![false; s];
        let mut avail = self.avail.clone();
        for p in placements {
            if p.vnf >= s {
                return Err(fail(format!("vnf index {} out of range", p.vnf)));
            }
            if std::mem::replace(&mut seen[p.vnf], true) {
                return Err(fail(format!("vnf {} placed twice", p.vnf)));
            }
            let demand = self.pending[slice][p.vnf];
            let cap = avail
                .get_mut(p.node)
                .ok_or_else(|| fail(format!("node index {} out of range", p.node)))?;
            if demand > *cap {
                return Err(fail(format!(
                    "vnf {} needs {demand} RBs but node {} has {}",
                    p.vnf, p.node, *cap
                )));
            }
            *cap -= demand;
        }

        self.avail = avail;
        for p in placements {
            self.assignments.push(Assignment {
                slice,
                vnf: p.vnf,
                node: p.node,
                amount: self.pending[slice][p.vnf],
            });
        }
        self.pending[slice].iter_mut().for_each(|d| *d = 0);
        self.accommodated[slice] = true;
        self.t += 1;
        Ok(())
    }

    /// Scaled network inputs: remaining capacities and the pending demand matrix.
    pub fn encode(&self, scale: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        assert!(scale > 0.0, "encoding scale must be positive");
        let sub = self.avail.iter().map(|&c| c as f64 / scale).collect();
        let dem = self
            .pending
            .iter()
            .map(|row| row.iter().map(|&d| d as f64 / scale).collect())
            .collect();
        (sub, dem)
    }

    /// Compact copy of the observable inputs, used by traces and replay.
    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            avail: self.avail.clone(),
            pending: self.pending.iter().flatten().copied().collect(),
            l: self.l(),
            s: self.s(),
        }
    }

    /// Checks conservation, single placement and accommodation consistency
    /// against the scenario the episode started from.
    pub fn check_invariants(&self, scenario: &Scenario) -> std::result::Result<(), String> {
        let mut used = vec![0u64; self.n()];
        let mut per_slice = vec![0usize; self.l()];
        let mut seen = std::collections::HashSet::new();
        for a in &self.assignments {
            if !seen.insert((a.slice, a.vnf)) {
                return Err(format!("vnf ({}, {}) placed twice", a.slice, a.vnf));
            }
            if a.amount != scenario.demands[a.slice][a.vnf] {
                return Err(format!("ledger amount mismatch for ({}, {})", a.slice, a.vnf));
            }
            used[a.node] += a.amount as u64;
            per_slice[a.slice] += 1;
        }
        for k in 0..self.n() {
            if self.avail[k] as u64 + used[k] != scenario.capacities[k] as u64 {
                return Err(format!(
                    "node {k}: avail {} + used {} != capacity {}",
                    self.avail[k], used[k], scenario.capacities[k]
                ));
            }
        }
        for i in 0..self.l() {
            let full = per_slice[i] == self.s();
            if self.accommodated[i] != full {
                return Err(format!("slice {i}: flag {} but {} ledger entries", self.accommodated[i], per_slice[i]));
            }
            if per_slice[i] != 0 && !full {
                return Err(format!("slice {i} partially placed"));
            }
            if self.accommodated[i] && self.pending[i].iter().any(|&d| d != 0) {
                return Err(format!("slice {i} accommodated but pending row non-zero"));
            }
            if !self.accommodated[i] && self.pending[i] != scenario.demands[i] {
                return Err(format!("slice {i} pending row altered"));
            }
        }
        if self.t != self.accommodated_count() {
            return Err(format!("t = {} but {} slices accommodated", self.t, self.accommodated_count()));
        }
        Ok(())
    }
}

/// Raw integer observation at one step; scaled on demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub avail: Vec<Rb>,
    /// Row-major `l x s` pending demands.
    pub pending: Vec<Rb>,
    pub l: usize,
    pub s: usize,
}

impl StateSnapshot {
    pub fn encode(&self, scale: f64) -> (Vec<f64>, Vec<f64>) {
        let sub = self.avail.iter().map(|&c| c as f64 / scale).collect();
        let dem = self.pending.iter().map(|&d| d as f64 / scale).collect();
        (sub, dem)
    }
}
