//! Single training runs, frozen-policy evaluation and their files.
//!
//! A run directory holds:
//!
//! - `config.txt`: the resolved single-seed configuration
//! - `episodes.csv`: one row per training episode
//! - `updates.csv`: PPO update diagnostics (PPO only)
//! - `policy.ckpt`, `qtable.bin` or `greedy.csv`: the trained agent
//! - `summary.txt`: final-window averages
//! - `eval.csv`: evaluation episodes, once evaluated
//!
//! Each run seed drives independent streams: the training channel, agent
//! initialisation, action sampling, Q-learning warmup and evaluation. The
//! channel streams depend only on `channel.seed` and the run seed, so every
//! algorithm trained with the same seeds sees the same channels.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{csit_label, Algorithm, RunConfig};
use crate::baselines::{
    epsilon_greedy_select, greedy_select, median_thresholds, q_update, GreedyAgent, QLearningAgent,
};
use crate::env::{RawAction, RsmaEnv, StepOutcome};
use crate::error::{Error, Result};
use crate::nn::checkpoint;
use crate::ppo::PpoAgent;
use crate::rng::{streams, SimRng};

pub const EPISODE_HEADER: &str =
    "episode,mean_reward,mean_sum_rate,qos_violation_fraction,wall_clock_seconds";
pub const EVAL_HEADER: &str = "episode,mean_reward,mean_sum_rate,qos_violation_fraction";
pub const UPDATE_HEADER: &str =
    "update,episodes_completed,mean_ratio,clip_fraction,policy_objective,value_loss,entropy";

pub const CONFIG_FILE: &str = "config.txt";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const UPDATES_FILE: &str = "updates.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const EVAL_FILE: &str = "eval.csv";
pub const FAILURE_FILE: &str = "failure.txt";
pub const PPO_CHECKPOINT: &str = "policy.ckpt";
pub const FAILED_CHECKPOINT: &str = "failed.ckpt";
pub const QTABLE_FILE: &str = "qtable.bin";
pub const GREEDY_FILE: &str = "greedy.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_sum_rate: f64,
    pub qos_violation_fraction: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct EpisodeStats {
    reward: f64,
    sum_rate: f64,
    violation: f64,
    steps: usize,
}

impl EpisodeStats {
    fn add(&mut self, reward: f64, sum_rate: f64, violation: f64) {
        self.reward += reward;
        self.sum_rate += sum_rate;
        self.violation += violation;
        self.steps += 1;
    }

    fn row(&self, episode: usize, wall_clock_seconds: f64) -> EpisodeRow {
        let n = self.steps as f64;
        EpisodeRow {
            episode,
            mean_reward: self.reward / n,
            mean_sum_rate: self.sum_rate / n,
            qos_violation_fraction: self.violation / n,
            wall_clock_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

impl RunRecord {
    /// Number of episodes in the final 10% window (at least one).
    pub fn final_window(&self) -> usize {
        (self.rows.len() / 10).max(1).min(self.rows.len())
    }

    /// Average sum-rate over the last 10% of episodes.
    pub fn final_sum_rate(&self) -> f64 {
        let w = self.final_window();
        mean(self.rows[self.rows.len() - w..].iter().map(|r| r.mean_sum_rate))
    }

    pub fn final_reward(&self) -> f64 {
        let w = self.final_window();
        mean(self.rows[self.rows.len() - w..].iter().map(|r| r.mean_reward))
    }

    /// Mean reward of episodes in `range`.
    pub fn mean_reward(&self, range: std::ops::Range<usize>) -> f64 {
        mean(self.rows[range].iter().map(|r| r.mean_reward))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(EPISODE_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{:.3}",
                r.episode, r.mean_reward, r.mean_sum_rate, r.qos_violation_fraction, r.wall_clock_seconds
            )
            .unwrap();
        }
        s
    }

    pub fn from_csv(seed: u64, text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(EPISODE_HEADER) {
            return Err("missing episode header".into());
        }
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(format!("row {i}: expected 5 fields"));
                }
                let num = |j: usize| f[j].parse::<f64>().map_err(|e| format!("row {i}: {e}"));
                Ok(EpisodeRow {
                    episode: f[0].parse().map_err(|e| format!("row {i}: {e}"))?,
                    mean_reward: num(1)?,
                    mean_sum_rate: num(2)?,
                    qos_violation_fraction: num(3)?,
                    wall_clock_seconds: num(4)?,
                })
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { seed, rows })
    }

    pub fn summary_text(&self, config: &RunConfig) -> String {
        format!(
            "scheme = {}\ncsit = {}\nseed = {}\nepisodes = {}\nfinal_window_episodes = {}\nfinal_mean_sum_rate = {}\nfinal_mean_reward = {}\n",
            config.scheme(),
            csit_label(config.env.channel.perfect_csit),
            self.seed,
            self.rows.len(),
            self.final_window(),
            self.final_sum_rate(),
            self.final_reward(),
        )
    }
}

/// A trained agent of any kind.
#[derive(Debug, Clone)]
pub enum Policy {
    Ppo(PpoAgent),
    QLearning(QLearningAgent),
    Greedy(GreedyAgent),
}

impl Policy {
    /// One environment step with exploration disabled.
    pub fn step_frozen(&self, env: &mut RsmaEnv, observation: &[f64]) -> Result<StepOutcome> {
        match self {
            Policy::Ppo(agent) => {
                let action: RawAction = agent.act_deterministic(observation)?;
                env.step(&action)
            }
            Policy::QLearning(agent) => {
                let a = agent.table.best_action(agent.state_of(observation)?);
                let action = agent.actions.get(a).expect("action index in range");
                env.step_with_fractions(&action.mu, &action.split)
            }
            Policy::Greedy(agent) => {
                let action = agent.actions.get(agent.history.best_action()).expect("action index in range");
                env.step_with_fractions(&action.mu, &action.split)
            }
        }
    }

    pub fn checkpoint_file(algorithm: Algorithm) -> &'static str {
        match algorithm {
            Algorithm::Ppo => PPO_CHECKPOINT,
            Algorithm::QLearning => QTABLE_FILE,
            Algorithm::Greedy => GREEDY_FILE,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            Policy::Ppo(a) => checkpoint::save(&dir.join(PPO_CHECKPOINT), &a.params, &a.optimizer),
            Policy::QLearning(a) => a.save(&dir.join(QTABLE_FILE)),
            Policy::Greedy(a) => a.save(&dir.join(GREEDY_FILE)),
        }
    }

    pub fn load(dir: &Path, config: &RunConfig) -> Result<Self> {
        let k = config.env.k;
        Ok(match config.algorithm {
            Algorithm::Ppo => {
                let path = dir.join(PPO_CHECKPOINT);
                let (params, optimizer) = checkpoint::load(&path)?;
                let arch = params.architecture();
                let layout = config.env.action_layout();
                if arch.input != config.env.observation_dim()
                    || arch.power_out != layout.power
                    || arch.split_out != layout.split
                {
                    return Err(Error::Format {
                        path,
                        reason: "network shape does not match the configuration".into(),
                    });
                }
                Policy::Ppo(PpoAgent::from_parts(config.ppo.clone(), params, optimizer)?)
            }
            Algorithm::QLearning => Policy::QLearning(QLearningAgent::load(&dir.join(QTABLE_FILE), k)?),
            Algorithm::Greedy => Policy::Greedy(GreedyAgent::load(&dir.join(GREEDY_FILE), k, config.greedy_explore)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<EpisodeRow>,
    pub mean_reward: f64,
    pub mean_sum_rate: f64,
    pub qos_violation_fraction: f64,
}

impl EvalSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(EVAL_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.episode, r.mean_reward, r.mean_sum_rate, r.qos_violation_fraction).unwrap();
        }
        s
    }
}

/// Runs `config.eval_episodes` episodes with the frozen policy on the
/// evaluation channel stream of `seed`.
pub fn evaluate_policy(policy: &Policy, config: &RunConfig, seed: u64) -> Result<EvalSummary> {
    let rng = SimRng::with_stream(config.channel_stream_seed(seed), streams::EVALUATION);
    let mut env = RsmaEnv::new(config.env.clone(), rng)?;
    let mut rows = Vec::with_capacity(config.eval_episodes);
    for episode in 0..config.eval_episodes {
        let mut obs = env.reset()?.0;
        let mut stats = EpisodeStats::default();
        loop {
            let out = policy.step_frozen(&mut env, &obs)?;
            stats.add(out.reward, out.sum_rate, out.penalty);
            if out.done {
                break;
            }
            obs = out.observation.0;
        }
        rows.push(stats.row(episode, 0.0));
    }
    Ok(EvalSummary {
        mean_reward: mean(rows.iter().map(|r| r.mean_reward)),
        mean_sum_rate: mean(rows.iter().map(|r| r.mean_sum_rate)),
        qos_violation_fraction: mean(rows.iter().map(|r| r.qos_violation_fraction)),
        rows,
    })
}

/// Evaluates and writes `eval.csv` into the run directory.
pub fn evaluate_run(policy: &Policy, config: &RunConfig, seed: u64) -> Result<EvalSummary> {
    let summary = evaluate_policy(policy, config, seed)?;
    let dir = config.run_dir(seed);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(EVAL_FILE), summary.to_csv())?;
    Ok(summary)
}

struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    fn seconds(&self) -> f64 {
        if self.enabled {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}

fn training_env(config: &RunConfig, seed: u64, stream: u64) -> Result<RsmaEnv> {
    RsmaEnv::new(
        config.env.clone(),
        SimRng::with_stream(config.channel_stream_seed(seed), stream),
    )
}

/// Trains the configured algorithm for one seed and writes the run
/// directory. Returns the record together with the trained agent.
pub fn train(config: &RunConfig, seed: u64) -> Result<(RunRecord, Policy)> {
    config.validate()?;
    let dir = config.run_dir(seed);
    fs::create_dir_all(&dir)?;
    let frozen = config.for_seed(seed);
    fs::write(dir.join(CONFIG_FILE), frozen.to_text())?;
    let _ = fs::remove_file(dir.join(FAILURE_FILE));
    let clock = Clock {
        start: Instant::now(),
        enabled: config.wall_clock,
    };
    let (rows, policy) = match config.algorithm {
        Algorithm::Ppo => train_ppo(config, seed, &dir, &clock)?,
        Algorithm::QLearning => train_qlearning(config, seed, &clock)?,
        Algorithm::Greedy => train_greedy(config, seed, &clock)?,
    };
    let record = RunRecord { seed, rows };
    fs::write(dir.join(EPISODES_FILE), record.to_csv())?;
    policy.save(&dir)?;
    fs::write(dir.join(SUMMARY_FILE), record.summary_text(config))?;
    Ok((record, policy))
}

/// [`train`] without the agent.
pub fn run_training(config: &RunConfig, seed: u64) -> Result<RunRecord> {
    train(config, seed).map(|(record, _)| record)
}

/// Reuses a finished run if its directory holds the same resolved
/// configuration, an episode log and a checkpoint.
pub fn load_run(config: &RunConfig, seed: u64) -> Result<Option<(RunRecord, Policy)>> {
    let dir = config.run_dir(seed);
    let Ok(saved) = fs::read_to_string(dir.join(CONFIG_FILE)) else {
        return Ok(None);
    };
    if saved != config.for_seed(seed).to_text()
        || dir.join(FAILURE_FILE).exists()
        || !dir.join(Policy::checkpoint_file(config.algorithm)).exists()
    {
        return Ok(None);
    }
    let Ok(text) = fs::read_to_string(dir.join(EPISODES_FILE)) else {
        return Ok(None);
    };
    let path = dir.join(EPISODES_FILE);
    let record = RunRecord::from_csv(seed, &text).map_err(|reason| Error::Format { path, reason })?;
    if record.rows.len() != config.episodes {
        return Ok(None);
    }
    Ok(Some((record, Policy::load(&dir, config)?)))
}

/// Loads a matching finished run or trains a new one.
pub fn train_or_load(config: &RunConfig, seed: u64) -> Result<(RunRecord, Policy)> {
    match load_run(config, seed)? {
        Some(found) => Ok(found),
        None => train(config, seed),
    }
}

fn train_ppo(config: &RunConfig, seed: u64, dir: &Path, clock: &Clock) -> Result<(Vec<EpisodeRow>, Policy)> {
    let mut env = training_env(config, seed, streams::CHANNEL)?;
    let mut init = SimRng::with_stream(seed, streams::POLICY_INIT);
    let mut agent = PpoAgent::new(
        config.ppo.clone(),
        config.env.observation_dim(),
        config.env.action_layout(),
        &mut init,
    )?;
    let mut rng = SimRng::with_stream(seed, streams::SAMPLING);
    let total = config.total_steps();
    let mut done_steps = 0;
    let mut rows = Vec::with_capacity(config.episodes);
    let mut stats = EpisodeStats::default();
    let mut updates = String::from(UPDATE_HEADER);
    updates.push('\n');
    let mut update_index = 0;
    while done_steps < total {
        let steps = config.ppo.rollout_steps.min(total - done_steps);
        let mut buffer = agent.collect_rollout(&mut env, steps, &mut rng)?;
        done_steps += steps;
        for t in &buffer.transitions {
            stats.add(t.reward, t.sum_rate, t.violation_fraction);
            if t.done {
                rows.push(stats.row(rows.len(), clock.seconds()));
                stats = EpisodeStats::default();
            }
        }
        let result = buffer
            .estimate_advantages(config.ppo.discount, config.ppo.gae_lambda)
            .and_then(|_| agent.update(&buffer, &mut rng));
        let metrics = match result {
            Ok(m) => m,
            Err(err @ Error::Divergence(_)) => {
                record_failure(dir, &rows, &agent, &err, clock)?;
                return Err(err);
            }
            Err(other) => return Err(other),
        };
        writeln!(
            updates,
            "{update_index},{},{},{},{},{},{}",
            rows.len(),
            metrics.mean_ratio,
            metrics.clip_fraction,
            metrics.policy_objective,
            metrics.value_loss,
            metrics.entropy
        )
        .unwrap();
        update_index += 1;
    }
    fs::write(dir.join(UPDATES_FILE), updates)?;
    Ok((rows, Policy::Ppo(agent)))
}

/// Writes the episodes so far plus a failure row, the failure reason and the
/// agent state at the time of failure.
fn record_failure(dir: &Path, rows: &[EpisodeRow], agent: &PpoAgent, err: &Error, clock: &Clock) -> Result<()> {
    let mut csv = RunRecord {
        seed: 0,
        rows: rows.to_vec(),
    }
    .to_csv();
    writeln!(csv, "{},NaN,NaN,NaN,{:.3}", rows.len(), clock.seconds()).unwrap();
    fs::write(dir.join(EPISODES_FILE), csv)?;
    fs::write(dir.join(FAILURE_FILE), format!("{err}\n"))?;
    checkpoint::save(&dir.join(FAILED_CHECKPOINT), &agent.params, &agent.optimizer)
}

/// Observations seen while playing uniformly random grid actions, used to
/// place the discretisation thresholds.
pub fn warmup_thresholds(config: &RunConfig, seed: u64, agent_k: usize) -> Result<Vec<f64>> {
    let mut env = training_env(config, seed, streams::WARMUP)?;
    let mut rng = SimRng::with_stream(seed, streams::WARMUP);
    let actions = crate::baselines::build_uniform_actions(crate::baselines::QLEARNING_ACTIONS, agent_k)?;
    let mut seen = Vec::with_capacity(config.q.warmup_steps);
    let mut obs = env.reset()?.0;
    for _ in 0..config.q.warmup_steps {
        seen.push(obs.clone());
        let a = actions.get(rng.below(actions.len())).expect("action index in range");
        let out = env.step_with_fractions(&a.mu, &a.split)?;
        obs = if out.done { env.reset()?.0 } else { out.observation.0 };
    }
    median_thresholds(&seen)
}

fn train_qlearning(config: &RunConfig, seed: u64, clock: &Clock) -> Result<(Vec<EpisodeRow>, Policy)> {
    let k = config.env.k;
    let mut agent = QLearningAgent::new(warmup_thresholds(config, seed, k)?, k)?;
    let mut env = training_env(config, seed, streams::CHANNEL)?;
    let mut rng = SimRng::with_stream(seed, streams::SAMPLING);
    let total = config.total_steps();
    let mut rows = Vec::with_capacity(config.episodes);
    let mut step = 0;
    for episode in 0..config.episodes {
        let mut obs = env.reset()?.0;
        let mut stats = EpisodeStats::default();
        loop {
            let s = agent.state_of(&obs)?;
            let eps = config.q.epsilon_at(step, total);
            let a = epsilon_greedy_select(&agent.table, s, eps, &mut rng);
            let action = agent.actions.get(a).expect("action index in range").clone();
            let out = env.step_with_fractions(&action.mu, &action.split)?;
            let s_next = agent.state_of(&out.observation.0)?;
            q_update(&mut agent.table, s, a, out.reward, s_next, config.q.alpha, config.ppo.discount);
            stats.add(out.reward, out.sum_rate, out.penalty);
            step += 1;
            if out.done {
                break;
            }
            obs = out.observation.0;
        }
        rows.push(stats.row(episode, clock.seconds()));
    }
    Ok((rows, Policy::QLearning(agent)))
}

fn train_greedy(config: &RunConfig, seed: u64, clock: &Clock) -> Result<(Vec<EpisodeRow>, Policy)> {
    let mut agent = GreedyAgent::new(config.env.k, config.greedy_explore)?;
    let mut env = training_env(config, seed, streams::CHANNEL)?;
    let mut rng = SimRng::with_stream(seed, streams::SAMPLING);
    let mut rows = Vec::with_capacity(config.episodes);
    for episode in 0..config.episodes {
        env.reset()?;
        let mut stats = EpisodeStats::default();
        loop {
            let a = greedy_select(&agent.history, &mut rng);
            let action = agent.actions.get(a).expect("action index in range").clone();
            let out = env.step_with_fractions(&action.mu, &action.split)?;
            agent.history.record(a, out.reward);
            stats.add(out.reward, out.sum_rate, out.penalty);
            if out.done {
                break;
            }
        }
        rows.push(stats.row(episode, clock.seconds()));
    }
    Ok((rows, Policy::Greedy(agent)))
}

/// Run directories for every seed of `config`.
pub fn run_dirs(config: &RunConfig) -> Vec<PathBuf> {
    config.seeds.iter().map(|&s| config.run_dir(s)).collect()
}
