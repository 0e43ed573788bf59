use serde::{Deserialize, Serialize};
use std::fmt;

use super::HmmError;

/// Largest supported number of tracker channels (256 states).
pub const MAX_TRACKERS: usize = 8;

/// Zero-based index into the state space. Index 0 is the all-correct state and
/// index `N - 1` the all-failed state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateIndex(pub usize);

impl fmt::Display for StateIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Per-channel correctness flags, `true` meaning the channel tracks the object.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateVector {
    bits: Vec<bool>,
}

impl StateVector {
    pub fn new(bits: Vec<bool>) -> Result<Self, HmmError> {
        if bits.is_empty() || bits.len() > MAX_TRACKERS {
            return Err(HmmError::TrackerCount(bits.len()));
        }
        Ok(Self { bits })
    }

    pub fn all_correct(n: usize) -> Result<Self, HmmError> {
        Self::new(vec![true; n])
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_correct(&self, tracker: usize) -> bool {
        self.bits[tracker]
    }

    pub fn correct_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Enumeration of all `2^n` correctness states.
///
/// Tracker `c` (zero-based) is correct in state `i` iff bit `n - 1 - c` of `i`
/// is clear, so tracker 0 owns the most significant bit, index 0 is `(1,…,1)`
/// and index `2^n - 1` is `(0,…,0)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpace {
    n: usize,
    correct_counts: Vec<usize>,
}

impl StateSpace {
    pub fn new(n: usize) -> Result<Self, HmmError> {
        if n == 0 || n > MAX_TRACKERS {
            return Err(HmmError::TrackerCount(n));
        }
        let size = 1usize << n;
        let correct_counts = (0..size)
            .map(|i| n - (i as u32).count_ones() as usize)
            .collect();
        Ok(Self { n, correct_counts })
    }

    /// Number of tracker channels.
    pub fn trackers(&self) -> usize {
        self.n
    }

    /// Number of states, `2^n`.
    pub fn len(&self) -> usize {
        self.correct_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn all_correct(&self) -> StateIndex {
        StateIndex(0)
    }

    pub fn all_failed(&self) -> StateIndex {
        StateIndex(self.len() - 1)
    }

    pub fn is_correct(&self, state: StateIndex, tracker: usize) -> bool {
        debug_assert!(tracker < self.n);
        state.0 & (1 << (self.n - 1 - tracker)) == 0
    }

    pub fn correct_count(&self, state: StateIndex) -> usize {
        self.correct_counts[state.0]
    }

    pub fn correct_counts(&self) -> &[usize] {
        &self.correct_counts
    }

    /// True when strictly more than half of the channels are correct.
    pub fn has_majority(&self, state: StateIndex) -> bool {
        2 * self.correct_count(state) > self.n
    }

    pub fn vector(&self, state: StateIndex) -> StateVector {
        StateVector {
            bits: (0..self.n).map(|c| self.is_correct(state, c)).collect(),
        }
    }

    pub fn index_of(&self, v: &StateVector) -> Result<StateIndex, HmmError> {
        if v.len() != self.n {
            return Err(HmmError::Dimension {
                expected: self.n,
                got: v.len(),
            });
        }
        let idx = v
            .bits
            .iter()
            .fold(0usize, |acc, &correct| (acc << 1) | usize::from(!correct));
        Ok(StateIndex(idx))
    }

    pub fn iter(&self) -> impl Iterator<Item = StateIndex> {
        (0..self.len()).map(StateIndex)
    }

    /// Marginal probability that each tracker is correct under `posterior`.
    pub fn tracker_marginals(&self, posterior: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|c| {
                self.iter()
                    .filter(|&s| self.is_correct(s, c))
                    .map(|s| posterior[s.0])
                    .sum()
            })
            .collect()
    }
}

/// The most probable state excluding the all-failed one.
///
/// Ties go to the state with more correct trackers, then to the lower index.
pub fn most_probable_state(space: &StateSpace, posterior: &[f64]) -> StateIndex {
    debug_assert_eq!(posterior.len(), space.len());
    let mut best = StateIndex(0);
    for s in space.iter().take(space.len() - 1).skip(1) {
        let (p, pb) = (posterior[s.0], posterior[best.0]);
        if p > pb || (p == pb && space.correct_count(s) > space.correct_count(best)) {
            best = s;
        }
    }
    best
}
