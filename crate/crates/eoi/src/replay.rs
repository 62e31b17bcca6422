//! FIFO replay buffer over joint transitions.
//!
//! Transitions store the environmental reward only; intrinsic rewards are
//! recomputed from the live classifier when a batch is sampled, because a
//! stored intrinsic value would go stale as the classifier trains.

use crate::classifier::ClassifierSample;
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use rand::Rng;
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<Array1<f64>>,
    pub actions: Vec<usize>,
    /// Environmental reward only.
    pub reward: f64,
    pub next_obs: Vec<Array1<f64>>,
    pub done: bool,
    /// One classifier sample per agent (anchor = that agent's observation).
    pub samples: Vec<ClassifierSample>,
}

pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "zero-capacity replay buffer");
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform indices with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..batch)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect()
    }

    /// Balanced classifier batch: batch_size/n samples per agent label, each
    /// drawn from an independently sampled transition.
    pub fn sample_balanced_classifier_batch(
        &self,
        batch_size: usize,
        n_agents: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<ClassifierSample>> {
        if self.items.is_empty() {
            return Err(Error::Shape("classifier batch from empty buffer".into()));
        }
        if batch_size % n_agents != 0 {
            return Err(Error::Config(format!(
                "batch size {batch_size} not divisible by {n_agents} agents"
            )));
        }
        let per_agent = batch_size / n_agents;
        let mut out = Vec::with_capacity(batch_size);
        for agent in 0..n_agents {
            for _ in 0..per_agent {
                let t = &self.items[rng.random_range(0..self.items.len())];
                out.push(t.samples[agent].clone());
            }
        }
        Ok(out)
    }
}

/// A sampled batch materialized into dense per-agent matrices, shared by
/// both learners. `state` rows concatenate every agent's observation.
pub struct BatchData {
    pub obs: Vec<Array2<f64>>,
    pub next_obs: Vec<Array2<f64>>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Array1<f64>,
    pub done: Vec<bool>,
    pub state: Array2<f64>,
    pub next_state: Array2<f64>,
    pub n_agents: usize,
    pub len: usize,
}

impl BatchData {
    pub fn from_indices(buffer: &ReplayBuffer, indices: &[usize]) -> Result<BatchData> {
        if indices.is_empty() {
            return Err(Error::Shape("empty learner batch".into()));
        }
        let b = indices.len();
        let first = buffer.get(indices[0]);
        let n = first.obs.len();
        let obs_dim = first.obs[0].len();
        let mut obs = vec![Array2::zeros((b, obs_dim)); n];
        let mut next_obs = vec![Array2::zeros((b, obs_dim)); n];
        let mut actions = vec![vec![0usize; b]; n];
        let mut rewards = Array1::zeros(b);
        let mut done = vec![false; b];
        let mut state = Array2::zeros((b, n * obs_dim));
        let mut next_state = Array2::zeros((b, n * obs_dim));
        for (row, &idx) in indices.iter().enumerate() {
            let t = buffer.get(idx);
            if t.obs.len() != n {
                return Err(Error::Shape("mixed agent counts in one buffer".into()));
            }
            rewards[row] = t.reward;
            done[row] = t.done;
            for i in 0..n {
                obs[i].row_mut(row).assign(&t.obs[i]);
                next_obs[i].row_mut(row).assign(&t.next_obs[i]);
                actions[i][row] = t.actions[i];
                state
                    .row_mut(row)
                    .slice_mut(ndarray::s![i * obs_dim..(i + 1) * obs_dim])
                    .assign(&t.obs[i]);
                next_state
                    .row_mut(row)
                    .slice_mut(ndarray::s![i * obs_dim..(i + 1) * obs_dim])
                    .assign(&t.next_obs[i]);
            }
        }
        Ok(BatchData {
            obs,
            next_obs,
            actions,
            rewards,
            done,
            state,
            next_state,
            n_agents: n,
            len: b,
        })
    }

    /// Recompute each agent's intrinsic reward for every row with the
    /// current classifier. Returned matrix is (batch, n_agents).
    pub fn recompute_intrinsic(
        &self,
        classifier: &crate::classifier::Classifier,
        mode: crate::classifier::RewardMode,
    ) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.len, self.n_agents));
        for i in 0..self.n_agents {
            let probs = classifier.predict_rows(self.obs[i].view())?;
            for b in 0..self.len {
                out[[b, i]] = match mode {
                    crate::classifier::RewardMode::Eoi => probs[[b, i]],
                    crate::classifier::RewardMode::Diayn => {
                        (probs[[b, i]] + crate::nnkit::EPS_NUM).ln()
                            - (1.0 / self.n_agents as f64).ln()
                    }
                };
            }
        }
        Ok(out)
    }
}
