//! Discrete comparison schemes: tabular Q-learning and a history-greedy
//! selector, both choosing from a uniform power-allocation grid.
//!
//! Action `i` (1-indexed) of an `n`-action grid gives the common stream
//! `i / (n + 1)` of the power, shares the rest equally among the private
//! streams, and splits the common rate equally among users.
//!
//! Q-learning sees each of the `2K` SINR dimensions through a single
//! threshold, so there are `2^(2K)` discrete states.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const QLEARNING_ACTIONS: usize = 9;
pub const GREEDY_ACTIONS: usize = 99;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteAction {
    /// `[mu_c, mu_1, ..., mu_K]`
    pub mu: Vec<f64>,
    /// Common-rate split fractions, summing to one.
    pub split: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteActionSet {
    actions: Vec<DiscreteAction>,
}

impl DiscreteActionSet {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&DiscreteAction> {
        self.actions.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DiscreteAction> {
        self.actions.iter()
    }
}

pub fn build_uniform_actions(n: usize, k: usize) -> Result<DiscreteActionSet> {
    if n < 1 || k < 1 {
        return Err(Error::invalid(format!("need n >= 1 actions and k >= 1 users, got n={n}, k={k}")));
    }
    let actions = (1..=n)
        .map(|i| {
            let mu_c = i as f64 / (n as f64 + 1.0);
            let private = (1.0 - mu_c) / k as f64;
            let mut mu = vec![private; k + 1];
            mu[0] = mu_c;
            DiscreteAction {
                mu,
                split: vec![1.0 / k as f64; k],
            }
        })
        .collect();
    Ok(DiscreteActionSet { actions })
}

/// Bit `d` of the index is set when dimension `d` is at or above its threshold.
pub fn discretize_state(observation: &[f64], thresholds: &[f64]) -> Result<usize> {
    if observation.len() != thresholds.len() {
        return Err(Error::invalid(format!(
            "{} observation dimensions but {} thresholds",
            observation.len(),
            thresholds.len()
        )));
    }
    if observation.len() >= usize::BITS as usize {
        return Err(Error::invalid("too many dimensions to index"));
    }
    if thresholds.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("thresholds must be finite"));
    }
    Ok(observation
        .iter()
        .zip(thresholds)
        .enumerate()
        .filter(|(_, (o, t))| o >= t)
        .map(|(d, _)| 1usize << d)
        .sum())
}

/// Per-dimension medians of a set of observations.
pub fn median_thresholds(observations: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = observations
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("need at least one observation"))?;
    (0..dim)
        .map(|d| {
            let mut col: Vec<f64> = observations.iter().map(|o| o[d]).collect();
            if col.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("observations must be finite"));
            }
            col.sort_by(f64::total_cmp);
            let n = col.len();
            Ok(if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            })
        })
        .collect()
}

fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    /// Table for a `dims`-dimensional observation with two levels each.
    pub fn for_observation(dims: usize, n_actions: usize) -> Self {
        Self::new(1 << dims, n_actions)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn best_action(&self, state: usize) -> usize {
        argmax_lowest(self.row(state))
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Q(s,a) += alpha * (r + discount * max_a' Q(s',a') - Q(s,a))`
pub fn q_update(
    table: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    next_state: usize,
    alpha: f64,
    discount: f64,
) {
    let target = reward + discount * table.max_value(next_state);
    let q = table.get(state, action);
    table.set(state, action, q + alpha * (target - q));
}

pub fn epsilon_greedy_select(table: &QTable, state: usize, epsilon: f64, rng: &mut SimRng) -> usize {
    if epsilon > 0.0 && rng.uniform() < epsilon {
        rng.below(table.n_actions())
    } else {
        table.best_action(state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyHistory {
    best: Vec<f64>,
    visits: Vec<u64>,
    pub explore: f64,
}

impl GreedyHistory {
    pub fn new(n_actions: usize, explore: f64) -> Self {
        Self {
            best: vec![f64::NEG_INFINITY; n_actions],
            visits: vec![0; n_actions],
            explore,
        }
    }

    pub fn best(&self) -> &[f64] {
        &self.best
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn len(&self) -> usize {
        self.best.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best.is_empty()
    }

    pub fn record(&mut self, action: usize, reward: f64) {
        self.visits[action] += 1;
        if reward > self.best[action] {
            self.best[action] = reward;
        }
    }

    pub fn best_action(&self) -> usize {
        argmax_lowest(&self.best)
    }

    pub fn to_csv(&self, actions: &DiscreteActionSet) -> String {
        let mut s = String::from("action,mu_c,best_reward,visits\n");
        for (i, (b, v)) in self.best.iter().zip(&self.visits).enumerate() {
            let mu_c = actions.get(i).map_or(f64::NAN, |a| a.mu[0]);
            writeln!(s, "{i},{mu_c},{b},{v}").unwrap();
        }
        s
    }

    pub fn from_csv(text: &str, explore: f64) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some("action,mu_c,best_reward,visits") {
            return Err("missing greedy history header".into());
        }
        let mut best = Vec::new();
        let mut visits = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 || fields[0].parse::<usize>() != Ok(row) {
                return Err(format!("bad greedy history row {row}: {line:?}"));
            }
            best.push(fields[2].parse::<f64>().map_err(|e| format!("row {row}: {e}"))?);
            visits.push(fields[3].parse::<u64>().map_err(|e| format!("row {row}: {e}"))?);
        }
        Ok(Self { best, visits, explore })
    }
}

/// With probability `1 - explore` the best action so far (unvisited actions
/// count as minus infinity, ties go to the lowest index); otherwise a
/// uniformly random action.
pub fn greedy_select(history: &GreedyHistory, rng: &mut SimRng) -> usize {
    if history.explore > 0.0 && rng.uniform() < history.explore {
        rng.below(history.len())
    } else {
        history.best_action()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QLearningConfig {
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the training steps over which epsilon is annealed.
    pub anneal_fraction: f64,
    pub warmup_steps: usize,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            anneal_fraction: 0.5,
            warmup_steps: 1000,
        }
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("q.alpha must lie in (0, 1]"));
        }
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) || !unit(self.anneal_fraction) {
            return Err(Error::config("q.epsilon_start, q.epsilon_end, q.anneal_fraction must lie in [0, 1]"));
        }
        if self.warmup_steps == 0 {
            return Err(Error::config("q.warmup_steps must be at least 1"));
        }
        Ok(())
    }

    /// Linearly annealed exploration rate at training step `step`.
    pub fn epsilon_at(&self, step: usize, total_steps: usize) -> f64 {
        let horizon = self.anneal_fraction * total_steps as f64;
        if horizon <= 0.0 || step as f64 >= horizon {
            return self.epsilon_end;
        }
        let frac = step as f64 / horizon;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QLearningAgent {
    pub table: QTable,
    pub thresholds: Vec<f64>,
    pub actions: DiscreteActionSet,
}

impl QLearningAgent {
    pub fn new(thresholds: Vec<f64>, k: usize) -> Result<Self> {
        let actions = build_uniform_actions(QLEARNING_ACTIONS, k)?;
        Ok(Self {
            table: QTable::for_observation(thresholds.len(), actions.len()),
            thresholds,
            actions,
        })
    }

    pub fn state_of(&self, observation: &[f64]) -> Result<usize> {
        discretize_state(observation, &self.thresholds)
    }

    /// Binary Q-table file.
    ///
    /// ```text
    /// magic "RSMAQTB\0", version u32 = 1, n_states u32, n_actions u32,
    /// n_thresholds u32, thresholds f64 x n_thresholds,
    /// values f64 x (n_states * n_actions), row-major by state
    /// ```
    /// All fields little-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(QTABLE_MAGIC);
        out.extend_from_slice(&1u32.to_le_bytes());
        for d in [self.table.n_states, self.table.n_actions, self.thresholds.len()] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for x in self.thresholds.iter().chain(&self.table.values) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], k: usize) -> std::result::Result<Self, String> {
        let u32_at = |pos: usize| -> std::result::Result<usize, String> {
            bytes
                .get(pos..pos + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
                .ok_or_else(|| "truncated header".to_string())
        };
        if bytes.get(..8) != Some(QTABLE_MAGIC.as_slice()) {
            return Err("bad magic".into());
        }
        if u32_at(8)? != 1 {
            return Err("unsupported version".into());
        }
        let (n_states, n_actions, n_thr) = (u32_at(12)?, u32_at(16)?, u32_at(20)?);
        let floats = n_thr + n_states * n_actions;
        if bytes.len() != 24 + 8 * floats {
            return Err(format!("expected {} bytes, found {}", 24 + 8 * floats, bytes.len()));
        }
        if n_thr >= usize::BITS as usize || n_states != 1 << n_thr {
            return Err("state count does not match threshold count".into());
        }
        let xs: Vec<f64> = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut agent = Self::new(xs[..n_thr].to_vec(), k).map_err(|e| e.to_string())?;
        if agent.actions.len() != n_actions {
            return Err(format!("expected {} actions, file has {n_actions}", agent.actions.len()));
        }
        agent.table.values = xs[n_thr..].to_vec();
        Ok(agent)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path, k: usize) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes, k).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }
}

pub const QTABLE_MAGIC: &[u8; 8] = b"RSMAQTB\0";

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyAgent {
    pub history: GreedyHistory,
    pub actions: DiscreteActionSet,
}

impl GreedyAgent {
    pub fn new(k: usize, explore: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&explore) {
            return Err(Error::config("greedy.explore must lie in [0, 1]"));
        }
        let actions = build_uniform_actions(GREEDY_ACTIONS, k)?;
        Ok(Self {
            history: GreedyHistory::new(actions.len(), explore),
            actions,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.history.to_csv(&self.actions))?;
        Ok(())
    }

    pub fn load(path: &Path, k: usize, explore: f64) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let format_err = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let history = GreedyHistory::from_csv(&text, explore).map_err(format_err)?;
        let mut agent = Self::new(k, explore)?;
        if history.len() != agent.actions.len() {
            return Err(format_err(format!("expected {} rows, found {}", agent.actions.len(), history.len())));
        }
        agent.history = history;
        Ok(agent)
    }
}
