use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::sched::EpisodeTrace;
use crate::state::StateSnapshot;

/// Training data of one finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub states: Vec<StateSnapshot>,
    /// Slice taken at each step (the one-hot mask position).
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
}

impl EpisodeRecord {
    pub fn from_trace(trace: &EpisodeTrace, targets: Vec<f64>) -> Self {
        assert_eq!(trace.steps.len(), targets.len());
        EpisodeRecord {
            states: trace.steps.iter().map(|s| s.state.clone()).collect(),
            actions: trace.steps.iter().map(|s| s.action).collect(),
            targets,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Bounded FIFO of finished episodes.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
}

impl ReplayMemory {
    pub const DEFAULT_CAPACITY: usize = 10_000;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory { capacity, episodes: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends an episode, evicting the oldest when full.
    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn get(&self, i: usize) -> Option<&EpisodeRecord> {
        self.episodes.get(i)
    }

    pub fn latest(&self) -> Option<&EpisodeRecord> {
        self.episodes.back()
    }

    /// `k` distinct indices drawn uniformly from all but the most recent episode.
    pub fn sample_past(&self, k: usize, rng: &mut impl Rng) -> Vec<usize> {
        let pool = self.episodes.len().saturating_sub(1);
        let k = k.min(pool);
        sample(rng, pool, k).into_vec()
    }
}
