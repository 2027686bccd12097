//! Fixed-capacity ring buffer of transitions with uniform sampling.

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

use crate::Scalar;

pub const ACTION_COUNT: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("transition feature width {got}, buffer holds width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("action index {0} outside 0..3")]
    InvalidAction(usize),
    #[error("reward {0} is not finite")]
    NonFiniteReward(f64),
    #[error("requested {requested} samples from a buffer of {size}")]
    Insufficient { requested: usize, size: usize },
    #[error("capacity must be positive")]
    ZeroCapacity,
}

/// One step of experience. `done` means: do not bootstrap past it.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<F> {
    pub state: Vec<F>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<F>,
    pub done: bool,
}

/// A sampled minibatch in matrix form.
#[derive(Clone, Debug)]
pub struct Batch<F> {
    pub states: Array2<F>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<F>,
    pub dones: Vec<bool>,
}

impl<F: Scalar> Batch<F> {
    pub fn from_transitions<'a>(items: impl IntoIterator<Item = &'a Transition<F>>) -> Self {
        let items: Vec<&Transition<F>> = items.into_iter().collect();
        let width = items.first().map_or(0, |t| t.state.len());
        let n = items.len();
        let mut states = Array2::zeros((n, width));
        let mut next_states = Array2::zeros((n, width));
        for (i, t) in items.iter().enumerate() {
            for (j, (&s, &ns)) in t.state.iter().zip(&t.next_state).enumerate() {
                states[[i, j]] = s;
                next_states[[i, j]] = ns;
            }
        }
        Self {
            states,
            actions: items.iter().map(|t| t.action).collect(),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states,
            dones: items.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Rows live in flat column stores, so pushing never allocates per transition.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<F> {
    capacity: usize,
    width: usize,
    states: Vec<F>,
    next_states: Vec<F>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    cursor: usize,
    allow_undersized: bool,
}

impl<F: Scalar> ReplayBuffer<F> {
    pub fn new(capacity: usize, width: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        let rows = capacity.min(1 << 16);
        Ok(Self {
            capacity,
            width,
            states: Vec::with_capacity(rows * width),
            next_states: Vec::with_capacity(rows * width),
            actions: Vec::with_capacity(rows),
            rewards: Vec::with_capacity(rows),
            dones: Vec::with_capacity(rows),
            cursor: 0,
            allow_undersized: false,
        })
    }

    /// Permit drawing more samples than stored items (with replacement).
    pub fn allow_undersized(mut self, allow: bool) -> Self {
        self.allow_undersized = allow;
        self
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn push(&mut self, t: Transition<F>) -> Result<(), ReplayError> {
        for len in [t.state.len(), t.next_state.len()] {
            if len != self.width {
                return Err(ReplayError::WidthMismatch {
                    expected: self.width,
                    got: len,
                });
            }
        }
        if t.action >= ACTION_COUNT {
            return Err(ReplayError::InvalidAction(t.action));
        }
        if !t.reward.is_finite() {
            return Err(ReplayError::NonFiniteReward(t.reward));
        }
        if self.len() < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.next_states.extend_from_slice(&t.next_state);
            self.actions.push(t.action);
            self.rewards.push(t.reward);
            self.dones.push(t.done);
        } else {
            let i = self.cursor;
            let cols = i * self.width..(i + 1) * self.width;
            self.states[cols.clone()].copy_from_slice(&t.state);
            self.next_states[cols].copy_from_slice(&t.next_state);
            self.actions[i] = t.action;
            self.rewards[i] = t.reward;
            self.dones[i] = t.done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Copy of the transition in storage slot `i`.
    pub fn get(&self, i: usize) -> Option<Transition<F>> {
        if i >= self.len() {
            return None;
        }
        let cols = i * self.width..(i + 1) * self.width;
        Some(Transition {
            state: self.states[cols.clone()].to_vec(),
            action: self.actions[i],
            reward: self.rewards[i],
            next_state: self.next_states[cols].to_vec(),
            done: self.dones[i],
        })
    }

    /// Stored transitions, oldest first.
    pub fn iter_ordered(&self) -> impl Iterator<Item = Transition<F>> + '_ {
        let n = self.len();
        let split = if n < self.capacity { 0 } else { self.cursor };
        (split..n).chain(0..split).filter_map(move |i| self.get(i))
    }

    fn gather(&self, idx: &[usize]) -> Batch<F> {
        let w = self.width;
        let mut states = Array2::zeros((idx.len(), w));
        let mut next_states = Array2::zeros((idx.len(), w));
        for (r, &i) in idx.iter().enumerate() {
            for j in 0..w {
                states[[r, j]] = self.states[i * w + j];
                next_states[[r, j]] = self.next_states[i * w + j];
            }
        }
        Batch {
            states,
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            next_states,
            dones: idx.iter().map(|&i| self.dones[i]).collect(),
        }
    }

    /// Everything stored, in slot order.
    pub fn to_batch(&self) -> Batch<F> {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.gather(&idx)
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, ReplayError> {
        let size = self.len();
        if size == 0 || (size < n && !self.allow_undersized) {
            return Err(ReplayError::Insufficient { requested: n, size });
        }
        Ok((0..n).map(|_| rng.random_range(0..size)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch<F>, ReplayError> {
        let idx = self.sample_indices(n, rng)?;
        Ok(self.gather(&idx))
    }
}
