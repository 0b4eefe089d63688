//! Flexibility/allocability-aware VNF placement.
//!
//! *Flexibility* of a node is the number of pending VNFs that would fit in
//! its remaining capacity; network flexibility sums that over nodes.
//! *Allocability* of a VNF is the number of nodes that could host it, and the
//! network's allocability is the minimum over pending VNFs. A VNF is placed
//! on the node that, after the hypothetical placement, maximizes
//! (allocability, flexibility) lexicographically.
//!
//! The definitional counting functions are exported as-is. [`select_node`]
//! uses an equivalent incremental form: node counts `#{k : avail_k >= d}` are
//! non-increasing in `d`, so the minimum allocability equals the allocability
//! of the largest pending demand, and moving one node's capacity only changes
//! that node's flexibility term.

use crate::scenario::Rb;
use crate::state::{EnvState, Placement};

/// Allocability of an empty pending set.
pub const UNBOUNDED: usize = usize::MAX;

/// Whether a demand fits in a capacity.
#[inline]
pub fn fits(demand: Rb, capacity: Rb) -> bool {
    demand <= capacity
}

/// Number of pending demands that fit in `capacity`.
pub fn node_flexibility(capacity: Rb, pending: &[Rb]) -> usize {
    pending.iter().filter(|&&d| fits(d, capacity)).count()
}

/// Sum of node flexibilities.
pub fn network_flexibility(avail: &[Rb], pending: &[Rb]) -> usize {
    avail.iter().map(|&c| node_flexibility(c, pending)).sum()
}

/// Number of nodes that can host `demand`.
pub fn vnf_allocability(demand: Rb, avail: &[Rb]) -> usize {
    avail.iter().filter(|&&c| fits(demand, c)).count()
}

/// Minimum allocability over the pending demands, [`UNBOUNDED`] when none are pending.
pub fn min_allocability(pending: &[Rb], avail: &[Rb]) -> usize {
    pending
        .iter()
        .map(|&d| vnf_allocability(d, avail))
        .min()
        .unwrap_or(UNBOUNDED)
}

/// Score of a node after hypothetically placing a VNF on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeScore {
    pub node: usize,
    pub alloc_after: usize,
    pub flex_after: usize,
}

/// Sorted multiset of pending demands.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PendingSet {
    sorted: Vec<Rb>,
}

impl PendingSet {
    pub fn new(demands: impl IntoIterator<Item = Rb>) -> Self {
        let mut sorted: Vec<Rb> = demands.into_iter().collect();
        sorted.sort_unstable();
        PendingSet { sorted }
    }

    /// All VNFs of every pending slice of `state`.
    pub fn from_state(state: &EnvState) -> Self {
        Self::new(state.pending_demands())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn max(&self) -> Option<Rb> {
        self.sorted.last().copied()
    }

    pub fn as_slice(&self) -> &[Rb] {
        &self.sorted
    }

    /// Number of demands `<= capacity`.
    #[inline]
    pub fn count_fitting(&self, capacity: Rb) -> usize {
        self.sorted.partition_point(|&d| d <= capacity)
    }

    /// Removes one occurrence of `demand`. Returns false if absent.
    pub fn remove(&mut self, demand: Rb) -> bool {
        match self.sorted.binary_search(&demand) {
            Ok(pos) => {
                self.sorted.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn insert(&mut self, demand: Rb) {
        let pos = self.sorted.partition_point(|&d| d < demand);
        self.sorted.insert(pos, demand);
    }
}

/// Picks the node for a VNF of `demand` given the remaining capacities and the
/// VNFs still waiting after this one. Returns `None` when no node fits.
pub fn select_node(avail: &[Rb], demand: Rb, remaining: &PendingSet) -> Option<NodeScore> {
    let dmax = remaining.max();
    let base_alloc = dmax.map(|d| vnf_allocability(d, avail));
    let base_flex: usize = avail.iter().map(|&c| remaining.count_fitting(c)).sum();

    let mut best: Option<NodeScore> = None;
    for (node, &cap) in avail.iter().enumerate() {
        if !fits(demand, cap) {
            continue;
        }
        let after = cap - demand;
        let alloc_after = match (dmax, base_alloc) {
            (Some(d), Some(a)) => a - usize::from(cap >= d) + usize::from(after >= d),
            _ => UNBOUNDED,
        };
        let flex_after = base_flex - remaining.count_fitting(cap) + remaining.count_fitting(after);
        let better = match best {
            None => true,
            Some(b) => (alloc_after, flex_after) > (b.alloc_after, b.flex_after),
        };
        if better {
            best = Some(NodeScore { node, alloc_after, flex_after });
        }
    }
    best
}

/// The slice cannot be mapped in the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blocked {
    pub slice: usize,
    /// First VNF (in placement order) that found no node.
    pub vnf: usize,
}

/// VNF indices of `demands` in placement order: descending demand, ties by index.
pub fn placement_order(demands: &[Rb]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by(|&a, &b| demands[b].cmp(&demands[a]).then(a.cmp(&b)));
    order
}

/// Maps every VNF of `slice` without touching `state`. The caller commits the
/// returned placements with [`EnvState::commit_slice`].
pub fn map_slice(state: &EnvState, slice: usize) -> Result<Vec<Placement>, Blocked> {
    let remaining = PendingSet::from_state(state);
    map_slice_with(state, slice, remaining)
}

/// [`map_slice`] with a precomputed pending set (must equal
/// `PendingSet::from_state(state)`).
pub fn map_slice_with(
    state: &EnvState,
    slice: usize,
    mut remaining: PendingSet,
) -> Result<Vec<Placement>, Blocked> {
    if !state.is_pending(slice) {
        return Err(Blocked { slice, vnf: 0 });
    }
    let demands = &state.pending[slice];
    let mut avail = state.avail.clone();
    let mut placements = Vec::with_capacity(demands.len());
    for vnf in placement_order(demands) {
        let d = demands[vnf];
        remaining.remove(d);
        let score = select_node(&avail, d, &remaining).ok_or(Blocked { slice, vnf })?;
        avail[score.node] -= d;
        placements.push(Placement::new(vnf, score.node));
    }
    Ok(placements)
}

/// Whether [`map_slice`] would succeed for `slice`. Accommodated slices are not feasible.
pub fn trial_feasible(state: &EnvState, slice: usize) -> bool {
    state.is_pending(slice) && map_slice(state, slice).is_ok()
}

/// Placements for every pending slice that can currently be mapped; `None`
/// for blocked or accommodated slices.
pub fn feasible_placements(state: &EnvState) -> Vec<Option<Vec<Placement>>> {
    let remaining = PendingSet::from_state(state);
    (0..state.l())
        .map(|i| {
            if state.is_pending(i) {
                map_slice_with(state, i, remaining.clone()).ok()
            } else {
                None
            }
        })
        .collect()
}
