//! Run configuration and its flat `key = value` text form.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Lists are comma-separated. Every key has a default, so an empty
//! file is a valid full-scale configuration. Recognised keys:
//!
//! | key | default |
//! |-----|---------|
//! | `channel.seed` | 0 |
//! | `channel.perfect_csit` | false |
//! | `channel.gauss_markov_rho` | 0 |
//! | `channel.error_scale` | 1 |
//! | `env.m`, `env.k` | 4, 4 |
//! | `env.p_t_dbm` | 40 |
//! | `env.qos` | 0.1 (one value for all users, or one per user) |
//! | `env.episode_len` | 200 |
//! | `env.mode` | rsma |
//! | `env.perfect_csit` | alias of `channel.perfect_csit` |
//! | `ppo.discount` | 0.9 |
//! | `ppo.gae_lambda` | 0.95 |
//! | `ppo.clip` | 0.2 |
//! | `ppo.epochs` | 10 |
//! | `ppo.minibatch` | 64 |
//! | `ppo.rollout_steps` | 2000 |
//! | `ppo.value_coef` | 0.5 |
//! | `ppo.entropy_coef` | 0.01 |
//! | `ppo.learning_rate` | 0.0003 |
//! | `ppo.optimizer` | adam (or sgd) |
//! | `ppo.hidden` | 64,64 |
//! | `ppo.init_log_std` | -0.5 |
//! | `ppo.shared_trunk` | true |
//! | `q.alpha` | 0.1 |
//! | `q.epsilon_start`, `q.epsilon_end` | 1.0, 0.05 |
//! | `q.anneal_fraction` | 0.5 |
//! | `q.warmup_steps` | 1000 |
//! | `greedy.explore` | 0.1 |
//! | `run.algorithm` | ppo |
//! | `run.episodes` | 4000 |
//! | `run.seeds` | 0 |
//! | `run.eval_episodes` | 100 |
//! | `run.out` | runs |
//! | `run.wall_clock` | true |
//! | `sweep.power_dbm` | 20,30,40,50,60 |
//! | `sweep.qos` | 0,0.1,0.25,0.5,1 |
//! | `sweep.schemes` | ppo-rsma,ppo-sdma,qlearning,greedy |
//! | `sweep.csit` | imperfect |
//!
//! Q-learning uses the PPO discount. With `run.wall_clock = false` the
//! wall-clock column is written as zero, which makes reruns byte-identical.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::QLearningConfig;
use crate::env::{EnvConfig, Mode};
use crate::error::{Error, Result};
use crate::ppo::PpoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ppo,
    QLearning,
    Greedy,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Ppo => "ppo",
            Algorithm::QLearning => "qlearning",
            Algorithm::Greedy => "greedy",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ppo" => Ok(Algorithm::Ppo),
            "qlearning" | "q-learning" | "q" => Ok(Algorithm::QLearning),
            "greedy" => Ok(Algorithm::Greedy),
            other => Err(Error::config(format!(
                "unknown algorithm {other:?}, expected ppo, qlearning or greedy"
            ))),
        }
    }
}

/// An algorithm together with the access scheme it controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scheme {
    pub algorithm: Algorithm,
    pub mode: Mode,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.algorithm {
            Algorithm::Ppo => write!(f, "ppo-{}", self.mode),
            other => write!(f, "{other}"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (alg, mode) = match s.rsplit_once('-') {
            Some((a, m @ ("rsma" | "sdma"))) => (a, m.parse()?),
            _ => (s.as_str(), Mode::Rsma),
        };
        Ok(Scheme {
            algorithm: alg.parse()?,
            mode,
        })
    }
}

pub fn csit_label(perfect: bool) -> &'static str {
    if perfect {
        "perfect"
    } else {
        "imperfect"
    }
}

fn parse_csit(s: &str) -> Result<bool> {
    match s.trim() {
        "perfect" => Ok(true),
        "imperfect" => Ok(false),
        other => Err(Error::config(format!("unknown csit mode {other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub power_dbm: Vec<f64>,
    pub qos: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// CSIT variants to run, `true` meaning perfect.
    pub csit: Vec<bool>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let scheme = |algorithm, mode| Scheme { algorithm, mode };
        Self {
            power_dbm: vec![20.0, 30.0, 40.0, 50.0, 60.0],
            qos: vec![0.0, 0.1, 0.25, 0.5, 1.0],
            schemes: vec![
                scheme(Algorithm::Ppo, Mode::Rsma),
                scheme(Algorithm::Ppo, Mode::Sdma),
                scheme(Algorithm::QLearning, Mode::Rsma),
                scheme(Algorithm::Greedy, Mode::Rsma),
            ],
            csit: vec![false],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub channel_seed: u64,
    pub algorithm: Algorithm,
    pub ppo: PpoConfig,
    pub q: QLearningConfig,
    pub greedy_explore: f64,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub out: PathBuf,
    pub wall_clock: bool,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            channel_seed: 0,
            algorithm: Algorithm::Ppo,
            ppo: PpoConfig::default(),
            q: QLearningConfig::default(),
            greedy_explore: 0.1,
            episodes: 4000,
            seeds: vec![0],
            eval_episodes: 100,
            out: PathBuf::from("runs"),
            wall_clock: true,
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    /// Small profile for quick runs: two antennas, two users, 300 episodes
    /// of 100 steps, five seeds, with shorter rollouts and a larger step size
    /// so that PPO gets enough updates in the reduced budget.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.env.m = 2;
        c.env.k = 2;
        c.env.qos = vec![0.1; 2];
        c.env.episode_len = 100;
        c.episodes = 300;
        c.seeds = (0..5).collect();
        c.ppo.rollout_steps = 500;
        c.ppo.learning_rate = 1e-3;
        c
    }

    pub fn scheme(&self) -> Scheme {
        Scheme {
            algorithm: self.algorithm,
            mode: self.env.mode,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.episodes * self.env.episode_len
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        self.q.validate()?;
        if !(0.0..=1.0).contains(&self.greedy_explore) {
            return Err(Error::config("greedy.explore must lie in [0, 1]"));
        }
        if self.episodes == 0 {
            return Err(Error::config("run.episodes must be at least 1"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("run.eval_episodes must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("run.seeds must not be empty"));
        }
        Ok(())
    }

    /// Directory holding the outputs of one training run.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out
            .join(format!("{}-{}", self.scheme(), csit_label(self.env.channel.perfect_csit)))
            .join(format!("seed{seed}"))
    }

    /// Seed for the channel streams of run seed `seed`.
    pub fn channel_stream_seed(&self, seed: u64) -> u64 {
        mix_seeds(self.channel_seed, seed)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let v = value.trim();
        let bad = |e: String| Error::config(format!("{key}: {e}"));
        macro_rules! parse {
            () => {
                v.parse().map_err(|e| bad(format!("cannot parse {v:?}: {e}")))?
            };
        }
        match key {
            "channel.seed" => self.channel_seed = parse!(),
            "channel.perfect_csit" | "env.perfect_csit" => self.env.channel.perfect_csit = parse!(),
            "channel.gauss_markov_rho" => self.env.channel.gauss_markov_rho = parse!(),
            "channel.error_scale" => self.env.channel.error_scale = parse!(),
            "env.m" => self.env.m = parse!(),
            "env.k" => self.env.k = parse!(),
            "env.p_t_dbm" => self.env.p_t_dbm = parse!(),
            "env.qos" => self.env.qos = parse_list(v).map_err(bad)?,
            "env.episode_len" => self.env.episode_len = parse!(),
            "env.mode" => self.env.mode = v.parse()?,
            "ppo.discount" => self.ppo.discount = parse!(),
            "ppo.gae_lambda" => self.ppo.gae_lambda = parse!(),
            "ppo.clip" => self.ppo.clip = parse!(),
            "ppo.epochs" => self.ppo.epochs = parse!(),
            "ppo.minibatch" => self.ppo.minibatch = parse!(),
            "ppo.rollout_steps" => self.ppo.rollout_steps = parse!(),
            "ppo.value_coef" => self.ppo.value_coef = parse!(),
            "ppo.entropy_coef" => self.ppo.entropy_coef = parse!(),
            "ppo.learning_rate" => self.ppo.learning_rate = parse!(),
            "ppo.optimizer" => self.ppo.optimizer = v.parse()?,
            "ppo.hidden" => self.ppo.hidden = parse_list(v).map_err(bad)?,
            "ppo.init_log_std" => self.ppo.init_log_std = parse!(),
            "ppo.shared_trunk" => self.ppo.shared_trunk = parse!(),
            "q.alpha" => self.q.alpha = parse!(),
            "q.epsilon_start" => self.q.epsilon_start = parse!(),
            "q.epsilon_end" => self.q.epsilon_end = parse!(),
            "q.anneal_fraction" => self.q.anneal_fraction = parse!(),
            "q.warmup_steps" => self.q.warmup_steps = parse!(),
            "greedy.explore" => self.greedy_explore = parse!(),
            "run.algorithm" => self.algorithm = v.parse()?,
            "run.episodes" => self.episodes = parse!(),
            "run.seeds" => self.seeds = parse_list(v).map_err(bad)?,
            "run.eval_episodes" => self.eval_episodes = parse!(),
            "run.out" => self.out = PathBuf::from(v),
            "run.wall_clock" => self.wall_clock = parse!(),
            "sweep.power_dbm" => self.sweep.power_dbm = parse_list(v).map_err(bad)?,
            "sweep.qos" => self.sweep.qos = parse_list(v).map_err(bad)?,
            "sweep.schemes" => {
                self.sweep.schemes = split_list(v).map(str::parse).collect::<Result<_>>()?
            }
            "sweep.csit" => self.sweep.csit = split_list(v).map(parse_csit).collect::<Result<_>>()?,
            _ => return Err(Error::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Broadcasts a single QoS value to every user.
    fn resolve(&mut self) {
        if self.env.qos.len() == 1 && self.env.k != 1 {
            self.env.qos = vec![self.env.qos[0]; self.env.k];
        }
    }

    /// Applies the settings in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            if !seen.insert(key.trim().to_string()) {
                return Err(Error::config(format!("line {}: duplicate key {}", n + 1, key.trim())));
            }
            self.set(key, value)
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies overrides, resolves shorthand and validates.
    pub fn finish(mut self) -> Result<Self> {
        self.resolve();
        self.validate()?;
        Ok(self)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Every key with its resolved value; parsing the result gives back an
    /// equal configuration.
    pub fn to_text(&self) -> String {
        let e = &self.env;
        let p = &self.ppo;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("channel.seed", self.channel_seed.to_string());
        kv("channel.perfect_csit", e.channel.perfect_csit.to_string());
        kv("channel.gauss_markov_rho", e.channel.gauss_markov_rho.to_string());
        kv("channel.error_scale", e.channel.error_scale.to_string());
        kv("env.m", e.m.to_string());
        kv("env.k", e.k.to_string());
        kv("env.p_t_dbm", e.p_t_dbm.to_string());
        kv("env.qos", join(&e.qos));
        kv("env.episode_len", e.episode_len.to_string());
        kv("env.mode", e.mode.to_string());
        kv("ppo.discount", p.discount.to_string());
        kv("ppo.gae_lambda", p.gae_lambda.to_string());
        kv("ppo.clip", p.clip.to_string());
        kv("ppo.epochs", p.epochs.to_string());
        kv("ppo.minibatch", p.minibatch.to_string());
        kv("ppo.rollout_steps", p.rollout_steps.to_string());
        kv("ppo.value_coef", p.value_coef.to_string());
        kv("ppo.entropy_coef", p.entropy_coef.to_string());
        kv("ppo.learning_rate", p.learning_rate.to_string());
        kv("ppo.optimizer", p.optimizer.to_string());
        kv("ppo.hidden", join(&p.hidden));
        kv("ppo.init_log_std", p.init_log_std.to_string());
        kv("ppo.shared_trunk", p.shared_trunk.to_string());
        kv("q.alpha", self.q.alpha.to_string());
        kv("q.epsilon_start", self.q.epsilon_start.to_string());
        kv("q.epsilon_end", self.q.epsilon_end.to_string());
        kv("q.anneal_fraction", self.q.anneal_fraction.to_string());
        kv("q.warmup_steps", self.q.warmup_steps.to_string());
        kv("greedy.explore", self.greedy_explore.to_string());
        kv("run.algorithm", self.algorithm.to_string());
        kv("run.episodes", self.episodes.to_string());
        kv("run.seeds", join(&self.seeds));
        kv("run.eval_episodes", self.eval_episodes.to_string());
        kv("run.out", self.out.display().to_string());
        kv("run.wall_clock", self.wall_clock.to_string());
        kv("sweep.power_dbm", join(&self.sweep.power_dbm));
        kv("sweep.qos", join(&self.sweep.qos));
        kv("sweep.schemes", join(&self.sweep.schemes));
        let csit: Vec<&str> = self.sweep.csit.iter().map(|&b| csit_label(b)).collect();
        kv("sweep.csit", csit.join(","));
        s
    }

    /// The configuration of a single-seed run, as frozen next to its outputs.
    pub fn for_seed(&self, seed: u64) -> Self {
        Self {
            seeds: vec![seed],
            ..self.clone()
        }
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    split_list(v)
        .map(|x| x.parse().map_err(|e| format!("cannot parse {x:?}: {e}")))
        .collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// SplitMix64 finaliser.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a base seed and a run seed into one well-spread seed.
pub fn mix_seeds(base: u64, run: u64) -> u64 {
    splitmix(base ^ splitmix(run))
}
