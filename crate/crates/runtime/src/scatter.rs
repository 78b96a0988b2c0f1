//! Per-generation bookkeeping for the master's scatter/gather barrier.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use gaqueue_core::Fitness;

use crate::messages::EvalResponse;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceptance {
    Accepted,
    Duplicate,
    Stale,
}

#[derive(Debug, Clone)]
pub struct ScatterState {
    pub run_id: String,
    pub generation: u64,
    pub outstanding: BTreeSet<usize>,
    pub received: BTreeMap<usize, Fitness>,
    pub deadline: Instant,
    pub republish_count: u32,
}

impl ScatterState {
    pub fn new(
        run_id: &str,
        generation: u64,
        indices: impl IntoIterator<Item = usize>,
        timeout: Duration,
    ) -> ScatterState {
        ScatterState {
            run_id: run_id.to_string(),
            generation,
            outstanding: indices.into_iter().collect(),
            received: BTreeMap::new(),
            deadline: Instant::now() + timeout,
            republish_count: 0,
        }
    }

    /// Highest attempt number published so far for any outstanding index.
    pub fn attempt(&self) -> u32 {
        self.republish_count + 1
    }

    pub fn is_complete(&self) -> bool {
        self.outstanding.is_empty()
    }

    /// Starts a republish round: bumps the attempt and resets the deadline.
    /// Returns the indices to send again.
    pub fn begin_republish(&mut self, timeout: Duration) -> Vec<usize> {
        self.republish_count += 1;
        self.deadline = Instant::now() + timeout;
        self.outstanding.iter().copied().collect()
    }
}

/// Classifies a response against the current scatter and records it if it is
/// the first one for its index.
pub fn dedup_accept(state: &mut ScatterState, response: &EvalResponse) -> Acceptance {
    if response.run_id != state.run_id || response.generation != state.generation {
        return Acceptance::Stale;
    }
    if state.received.contains_key(&response.index) {
        return Acceptance::Duplicate;
    }
    // an attempt never published, or an index never scattered, cannot be ours
    if response.attempt > state.attempt() || !state.outstanding.remove(&response.index) {
        return Acceptance::Stale;
    }
    state.received.insert(response.index, response.fitness);
    Acceptance::Accepted
}
