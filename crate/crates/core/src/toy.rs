//! A two-state benchmark MDP for checking that a learner improves.
//!
//! The observation is a one-hot encoding of the state. The action carries two
//! logits; the reward is the Softmax weight placed on the logit whose index
//! equals the current state, so the optimal policy puts all mass there and
//! earns 1 per step. The next state is drawn uniformly, independent of the
//! action.

use crate::env::{ActionLayout, Environment, Feedback, RawAction, softmax};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone)]
pub struct TwoStateToy {
    episode_len: usize,
    rng: SimRng,
    state: usize,
    steps: usize,
}

impl TwoStateToy {
    pub fn new(episode_len: usize, rng: SimRng) -> Self {
        Self {
            episode_len: episode_len.max(1),
            rng,
            state: 0,
            steps: 0,
        }
    }

    pub fn layout(&self) -> ActionLayout {
        ActionLayout { power: 2, split: 0 }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Reward for Softmax weights `weights` in `state`.
    pub fn reward(state: usize, weights: &[f64]) -> f64 {
        weights[state]
    }

    fn observe(&self) -> Vec<f64> {
        let mut o = vec![0.0; 2];
        o[self.state] = 1.0;
        o
    }
}

impl Environment for TwoStateToy {
    fn observation_dim(&self) -> usize {
        2
    }

    fn action_layout(&self) -> ActionLayout {
        self.layout()
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.steps = 0;
        self.state = self.rng.below(2);
        Ok(self.observe())
    }

    fn step(&mut self, action: &RawAction) -> Result<Feedback> {
        if action.layout() != self.layout() {
            return Err(Error::InvalidAction("toy MDP takes two logits".into()));
        }
        if self.steps >= self.episode_len {
            return Err(Error::EpisodeFinished);
        }
        let reward = Self::reward(self.state, &softmax(&action.power_logits));
        self.steps += 1;
        self.state = self.rng.below(2);
        Ok(Feedback {
            observation: self.observe(),
            reward,
            done: self.steps == self.episode_len,
            sum_rate: reward,
            violation_fraction: 0.0,
        })
    }
}
