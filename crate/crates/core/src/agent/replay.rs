use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::env::Observation;

/// One environment step as stored for learning.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    /// Executed (normalised) weights.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Observation,
    pub done: bool,
    /// Earlier `(state, action)` pairs of the episode, oldest first, used when
    /// the critic looks at more than one step.
    pub context: Vec<(Observation, Vec<f64>)>,
}

/// Fixed-capacity FIFO store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` distinct transitions drawn uniformly (all of them if fewer).
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<&Transition> {
        let n = n.min(self.items.len());
        sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect()
    }
}
