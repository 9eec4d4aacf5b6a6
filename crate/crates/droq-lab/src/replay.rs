//! Fixed-capacity FIFO replay buffer with uniform mini-batch sampling.

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// One stored interaction. `terminal` is true only for genuine environment
/// termination; time-limit truncation stores false so the target bootstraps
/// normally.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    storage: Vec<Transition>,
    next_slot: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            storage: Vec::new(),
            next_slot: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a transition; once full, overwrites the oldest entry.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim
            || t.next_obs.len() != self.obs_dim
            || t.action.len() != self.act_dim
        {
            return Err(Error::Config(format!(
                "transition dims (obs {}, act {}, next {}) do not match buffer ({}, {})",
                t.obs.len(),
                t.action.len(),
                t.next_obs.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        if !t.reward.is_finite() {
            return Err(Error::Numeric("non-finite reward".into()));
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next_slot] = t;
            self.next_slot = (self.next_slot + 1) % self.capacity;
        }
        Ok(())
    }

    /// Uniform sample with replacement over the current contents.
    pub fn sample(&self, batch_size: usize, rng: &mut RandomStream) -> Result<Vec<&Transition>> {
        if self.storage.is_empty() {
            return Err(Error::Usage("sampling from an empty replay buffer".into()));
        }
        Ok((0..batch_size)
            .map(|_| &self.storage[rng.uniform_usize(self.storage.len())])
            .collect())
    }

    /// Insertion-ordered iteration (oldest first).
    pub fn iter_ordered(&self) -> impl Iterator<Item = &Transition> {
        let (wrapped, rest) = self.storage.split_at(self.next_slot.min(self.storage.len()));
        rest.iter().chain(wrapped.iter())
    }
}
