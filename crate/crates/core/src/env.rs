//! The power-allocation MDP.
//!
//! State: the SINR feedback pairs `[g1c, g1p, ..., gKc, gKp]` reported by the
//! users for the most recent transmission. Action: unconstrained logits which
//! the environment maps through Softmax onto the power simplex and the
//! common-rate split simplex, so the power budget, the common-rate
//! decodability bound and nonnegativity hold by construction. Reward: the
//! sum-rate scaled by `1 - p`, where `p` is the fraction of users whose QoS
//! target was missed.
//!
//! Each step draws a fresh block-fading channel. Precoders come from the BS
//! estimate; realised SINRs use the true channel.

use std::fmt;
use std::str::FromStr;

use crate::channel::{dbm_to_linear, ChannelConfig, ChannelProcess, ChannelRealization};
use crate::error::{Error, Result};
use crate::phy::{self, Allocation, BeamGains, LinkRates, RateReport, FEASIBILITY_TOL};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    #[default]
    Rsma,
    /// No common stream: `mu_c = 0` and `c = 0`.
    Sdma,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rsma => "rsma",
            Mode::Sdma => "sdma",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rsma" => Ok(Mode::Rsma),
            "sdma" => Ok(Mode::Sdma),
            other => Err(Error::config(format!("unknown mode {other:?}, expected rsma or sdma"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub m: usize,
    pub k: usize,
    pub p_t_dbm: f64,
    /// Per-user minimum total rate, bits/s/Hz.
    pub qos: Vec<f64>,
    pub episode_len: usize,
    pub mode: Mode,
    pub channel: ChannelConfig,
}

impl Default for EnvConfig {
    /// Four antennas, four users, 40 dBm, QoS 0.1 bps/Hz, 200-step episodes.
    fn default() -> Self {
        Self {
            m: 4,
            k: 4,
            p_t_dbm: 40.0,
            qos: vec![0.1; 4],
            episode_len: 200,
            mode: Mode::Rsma,
            channel: ChannelConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m < self.k {
            return Err(Error::config(format!(
                "need env.m >= env.k >= 1, got m={} k={}",
                self.m, self.k
            )));
        }
        if self.episode_len == 0 {
            return Err(Error::config("env.episode_len must be at least 1"));
        }
        if self.qos.len() != self.k {
            return Err(Error::config(format!(
                "env.qos has {} entries for {} users",
                self.qos.len(),
                self.k
            )));
        }
        if self.qos.iter().any(|q| !(*q >= 0.0) || !q.is_finite()) {
            return Err(Error::config("env.qos entries must be finite and >= 0"));
        }
        if !self.p_t_dbm.is_finite() {
            return Err(Error::config("env.p_t_dbm must be finite"));
        }
        self.channel.validate()
    }

    pub fn p_t_linear(&self) -> Result<f64> {
        dbm_to_linear(self.p_t_dbm)
    }

    pub fn observation_dim(&self) -> usize {
        2 * self.k
    }

    pub fn action_layout(&self) -> ActionLayout {
        match self.mode {
            Mode::Rsma => ActionLayout {
                power: self.k + 1,
                split: self.k,
            },
            Mode::Sdma => ActionLayout {
                power: self.k,
                split: 0,
            },
        }
    }
}

/// The same configuration with the common stream removed.
pub fn sdma_variant(config: &EnvConfig) -> EnvConfig {
    EnvConfig {
        mode: Mode::Sdma,
        ..config.clone()
    }
}

/// Sizes of the two logit blocks of an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionLayout {
    pub power: usize,
    pub split: usize,
}

impl ActionLayout {
    pub fn dim(&self) -> usize {
        self.power + self.split
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn from_sinrs(gamma_c: &[f64], gamma_p: &[f64]) -> Self {
        Observation(
            gamma_c
                .iter()
                .zip(gamma_p)
                .flat_map(|(&c, &p)| [c, p])
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAction {
    pub power_logits: Vec<f64>,
    pub split_logits: Vec<f64>,
}

impl RawAction {
    pub fn zeros(layout: ActionLayout) -> Self {
        Self {
            power_logits: vec![0.0; layout.power],
            split_logits: vec![0.0; layout.split],
        }
    }

    /// Splits a flat `[power.., split..]` vector.
    pub fn from_flat(layout: ActionLayout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.dim() {
            return Err(Error::InvalidAction(format!(
                "action has {} entries, expected {}",
                flat.len(),
                layout.dim()
            )));
        }
        Ok(Self {
            power_logits: flat[..layout.power].to_vec(),
            split_logits: flat[layout.power..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.power_logits.clone();
        v.extend_from_slice(&self.split_logits);
        v
    }

    pub fn layout(&self) -> ActionLayout {
        ActionLayout {
            power: self.power_logits.len(),
            split: self.split_logits.len(),
        }
    }
}

/// Numerically stable Softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Fraction of users whose total rate falls strictly below their QoS target.
pub fn penalty(total_rates: &[f64], qos: &[f64]) -> Result<f64> {
    if total_rates.len() != qos.len() || qos.is_empty() {
        return Err(Error::invalid(format!(
            "{} rates but {} QoS targets",
            total_rates.len(),
            qos.len()
        )));
    }
    Ok(qos_violations(total_rates, qos) as f64 / qos.len() as f64)
}

fn qos_violations(total_rates: &[f64], qos: &[f64]) -> usize {
    total_rates
        .iter()
        .zip(qos)
        .filter(|(r, q)| *r - *q < 0.0)
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub sum_rate: f64,
    pub penalty: f64,
    pub qos_violations: usize,
    pub allocation: Allocation,
    pub rates: RateReport,
    pub done: bool,
}

/// What a learning agent sees after one step of any environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub sum_rate: f64,
    pub violation_fraction: f64,
}

/// Episodic environment with Softmax-mapped logit actions.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_layout(&self) -> ActionLayout;
    fn reset(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: &RawAction) -> Result<Feedback>;
}

#[derive(Debug, Clone)]
struct ChannelSlot {
    realization: ChannelRealization,
    gains: BeamGains,
}

impl ChannelSlot {
    fn new(realization: ChannelRealization) -> Result<Self> {
        let precoders = phy::compute_precoders(&realization.estimated_channel)?;
        let gains = phy::beam_gains(&realization.true_channel, &precoders)?;
        Ok(Self { realization, gains })
    }
}

#[derive(Debug, Clone)]
pub struct RsmaEnv {
    config: EnvConfig,
    p_t_linear: f64,
    process: ChannelProcess,
    rng: SimRng,
    slot: Option<ChannelSlot>,
    steps: usize,
    done: bool,
}

impl RsmaEnv {
    pub fn new(config: EnvConfig, rng: SimRng) -> Result<Self> {
        config.validate()?;
        let p_t_linear = config.p_t_linear()?;
        let process = ChannelProcess::new(config.m, config.k, p_t_linear, config.channel)?;
        Ok(Self {
            config,
            p_t_linear,
            process,
            rng,
            slot: None,
            steps: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn current_channel(&self) -> Option<&ChannelRealization> {
        self.slot.as_ref().map(|s| &s.realization)
    }

    /// Replaces the channel used by the next step. Intended for hand-built
    /// scenarios; the shape must match the configuration.
    pub fn set_channel(&mut self, realization: ChannelRealization) -> Result<()> {
        if realization.true_channel.shape() != (self.config.m, self.config.k)
            || realization.estimated_channel.shape() != (self.config.m, self.config.k)
        {
            return Err(Error::invalid("channel shape does not match the configuration"));
        }
        self.slot = Some(ChannelSlot::new(realization)?);
        Ok(())
    }

    /// Power fractions spread evenly over the streams of the current mode.
    pub fn uniform_mu(&self) -> Vec<f64> {
        let k = self.config.k;
        match self.config.mode {
            Mode::Rsma => vec![1.0 / (k as f64 + 1.0); k + 1],
            Mode::Sdma => {
                let mut mu = vec![1.0 / k as f64; k + 1];
                mu[0] = 0.0;
                mu
            }
        }
    }

    pub fn reset(&mut self) -> Result<Observation> {
        self.process.restart();
        let realization = self.process.next(&mut self.rng)?;
        let slot = ChannelSlot::new(realization)?;
        let links = LinkRates::evaluate(&slot.gains, &self.uniform_mu(), self.p_t_linear)?;
        self.slot = Some(slot);
        self.steps = 0;
        self.done = false;
        Ok(Observation::from_sinrs(&links.gamma_c, &links.gamma_p))
    }

    fn slot(&self) -> Result<&ChannelSlot> {
        self.slot
            .as_ref()
            .ok_or_else(|| Error::Usage("environment must be reset before use".into()))
    }

    /// Maps logits to an allocation on the current channel.
    pub fn action_to_allocation(&self, raw: &RawAction) -> Result<Allocation> {
        self.resolve_logits(raw).map(|(alloc, _)| alloc)
    }

    fn resolve_logits(&self, raw: &RawAction) -> Result<(Allocation, RateReport)> {
        let layout = self.config.action_layout();
        if raw.layout() != layout {
            return Err(Error::InvalidAction(format!(
                "expected {} power and {} split logits, got {} and {}",
                layout.power,
                layout.split,
                raw.power_logits.len(),
                raw.split_logits.len()
            )));
        }
        if raw.to_flat().iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidAction("logits must be finite".into()));
        }
        let power = softmax(&raw.power_logits);
        let mu = match self.config.mode {
            Mode::Rsma => power,
            Mode::Sdma => std::iter::once(0.0).chain(power).collect(),
        };
        let split = match self.config.mode {
            Mode::Rsma => softmax(&raw.split_logits),
            Mode::Sdma => vec![0.0; self.config.k],
        };
        self.resolve(mu, &split)
    }

    /// Allocation from explicit power fractions and common-split fractions.
    ///
    /// In SDMA mode the common share is dropped and the private fractions are
    /// rescaled to the full budget; the split is ignored.
    pub fn allocation_from_fractions(&self, mu: &[f64], split: &[f64]) -> Result<Allocation> {
        self.resolve_fractions(mu, split).map(|(alloc, _)| alloc)
    }

    fn resolve_fractions(&self, mu: &[f64], split: &[f64]) -> Result<(Allocation, RateReport)> {
        let k = self.config.k;
        if mu.len() != k + 1 || split.len() != k {
            return Err(Error::InvalidAction(format!(
                "expected {} power fractions and {k} split fractions",
                k + 1
            )));
        }
        let all_valid = mu.iter().chain(split).all(|x| x.is_finite() && *x >= 0.0);
        let mu_total: f64 = mu.iter().sum();
        if !all_valid || mu_total > 1.0 + FEASIBILITY_TOL {
            return Err(Error::InvalidAction(
                "power fractions must be nonnegative with total at most 1".into(),
            ));
        }
        match self.config.mode {
            Mode::Rsma => {
                let split_total: f64 = split.iter().sum();
                if (split_total - 1.0).abs() > FEASIBILITY_TOL {
                    return Err(Error::InvalidAction("split fractions must sum to 1".into()));
                }
                self.resolve(mu.to_vec(), split)
            }
            Mode::Sdma => {
                let private_total: f64 = mu[1..].iter().sum();
                if !(private_total > 0.0) {
                    return Err(Error::InvalidAction(
                        "SDMA needs some private power".into(),
                    ));
                }
                let mu: Vec<f64> = std::iter::once(0.0)
                    .chain(mu[1..].iter().map(|x| x / private_total * mu_total))
                    .collect();
                self.resolve(mu, &vec![0.0; k])
            }
        }
    }

    fn resolve(&self, mu: Vec<f64>, split: &[f64]) -> Result<(Allocation, RateReport)> {
        let slot = self.slot()?;
        let links = LinkRates::evaluate(&slot.gains, &mu, self.p_t_linear)?;
        let c: Vec<f64> = split.iter().map(|phi| phi * links.common_rate).collect();
        let report = links.with_split(&c)?;
        Ok((Allocation { mu, c }, report))
    }

    pub fn step(&mut self, raw: &RawAction) -> Result<StepOutcome> {
        self.check_running()?;
        let (allocation, rates) = self.resolve_logits(raw)?;
        self.finish_step(allocation, rates)
    }

    /// Step with explicit fractions (used by the discrete baselines).
    pub fn step_with_fractions(&mut self, mu: &[f64], split: &[f64]) -> Result<StepOutcome> {
        self.check_running()?;
        let (allocation, rates) = self.resolve_fractions(mu, split)?;
        self.finish_step(allocation, rates)
    }

    fn check_running(&self) -> Result<()> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        self.slot().map(|_| ())
    }

    fn finish_step(&mut self, allocation: Allocation, rates: RateReport) -> Result<StepOutcome> {
        let penalty = penalty(&rates.total_rates, &self.config.qos)?;
        let qos_violations = qos_violations(&rates.total_rates, &self.config.qos);
        let reward = rates.sum_rate * (1.0 - penalty);

        self.steps += 1;
        self.done = self.steps == self.config.episode_len;

        // Users report what they measure on the next block under the
        // allocation just applied.
        let next = ChannelSlot::new(self.process.next(&mut self.rng)?)?;
        let links = LinkRates::evaluate(&next.gains, &allocation.mu, self.p_t_linear)?;
        self.slot = Some(next);

        Ok(StepOutcome {
            observation: Observation::from_sinrs(&links.gamma_c, &links.gamma_p),
            reward,
            sum_rate: rates.sum_rate,
            penalty,
            qos_violations,
            allocation,
            rates,
            done: self.done,
        })
    }
}

impl Environment for RsmaEnv {
    fn observation_dim(&self) -> usize {
        self.config.observation_dim()
    }

    fn action_layout(&self) -> ActionLayout {
        self.config.action_layout()
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        RsmaEnv::reset(self).map(|o| o.0)
    }

    fn step(&mut self, action: &RawAction) -> Result<Feedback> {
        let out = RsmaEnv::step(self, action)?;
        Ok(Feedback {
            violation_fraction: out.penalty,
            observation: out.observation.0,
            reward: out.reward,
            done: out.done,
            sum_rate: out.sum_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ComplexMatrix;
    use crate::phy::check_feasibility;
    use num_complex::Complex64;

    fn small_config(k: usize) -> EnvConfig {
        EnvConfig {
            m: k,
            k,
            qos: vec![0.1; k],
            episode_len: 5,
            ..EnvConfig::default()
        }
    }

    fn env(config: EnvConfig, seed: u64) -> RsmaEnv {
        RsmaEnv::new(config, SimRng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_logits_give_uniform_fractions() {
        let mut e = env(EnvConfig::default(), 1);
        e.reset().unwrap();
        let alloc = e
            .action_to_allocation(&RawAction::zeros(e.config().action_layout()))
            .unwrap();
        for &m in &alloc.mu {
            assert!((m - 0.2).abs() < 1e-15);
        }
        let rc: f64 = alloc.c.iter().sum();
        for &c in &alloc.c {
            assert!((c - rc / 4.0).abs() < 1e-15);
        }
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && p[2] == 0.0);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn non_finite_logits_rejected() {
        let mut e = env(small_config(2), 1);
        e.reset().unwrap();
        let raw = RawAction {
            power_logits: vec![0.0, f64::NAN, 0.0],
            split_logits: vec![0.0, 0.0],
        };
        assert!(matches!(e.step(&raw), Err(Error::InvalidAction(_))));
        let wrong = RawAction {
            power_logits: vec![0.0; 2],
            split_logits: vec![0.0; 2],
        };
        assert!(matches!(e.step(&wrong), Err(Error::InvalidAction(_))));
    }

    #[test]
    fn zero_common_rate_zeroes_the_split() {
        let mut e = env(small_config(2), 4);
        e.reset().unwrap();
        let raw = RawAction {
            power_logits: vec![-800.0, 0.0, 0.0],
            split_logits: vec![3.0, -1.0],
        };
        let alloc = e.action_to_allocation(&raw).unwrap();
        assert_eq!(alloc.mu[0], 0.0);
        assert_eq!(alloc.c, vec![0.0, 0.0]);
    }

    #[test]
    fn penalty_values() {
        assert_eq!(penalty(&[1.0; 4], &[0.1; 4]).unwrap(), 0.0);
        assert_eq!(penalty(&[0.0; 4], &[0.1; 4]).unwrap(), 1.0);
        assert_eq!(penalty(&[1.0, 0.0, 1.0, 0.05], &[0.1; 4]).unwrap(), 0.5);
        // Meeting the target exactly is not a violation.
        assert_eq!(penalty(&[0.1, 0.1], &[0.1, 0.1]).unwrap(), 0.0);
        assert!(penalty(&[1.0], &[0.1, 0.1]).is_err());
    }

    #[test]
    fn reset_is_deterministic() {
        let a = env(EnvConfig::default(), 9).reset().unwrap();
        let b = env(EnvConfig::default(), 9).reset().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert!(a.as_slice().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn csit_modes_share_true_channel() {
        let mut imperfect = env(EnvConfig::default(), 3);
        let mut perfect_cfg = EnvConfig::default();
        perfect_cfg.channel.perfect_csit = true;
        let mut perfect = env(perfect_cfg, 3);
        imperfect.reset().unwrap();
        perfect.reset().unwrap();
        let a = imperfect.current_channel().unwrap();
        let b = perfect.current_channel().unwrap();
        assert_eq!(a.true_channel, b.true_channel);
        assert_ne!(a.estimated_channel, b.estimated_channel);
        assert_eq!(b.estimated_channel, b.true_channel);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = EnvConfig::default();
        cfg.m = 2;
        assert!(matches!(
            RsmaEnv::new(cfg, SimRng::seed_from_u64(0)),
            Err(Error::Config(_))
        ));
        let mut cfg = EnvConfig::default();
        cfg.episode_len = 0;
        assert!(RsmaEnv::new(cfg, SimRng::seed_from_u64(0)).is_err());
        let mut cfg = EnvConfig::default();
        cfg.qos = vec![0.1; 3];
        assert!(RsmaEnv::new(cfg, SimRng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn step_requires_reset_and_stops_at_episode_end() {
        let mut e = env(small_config(2), 2);
        let raw = RawAction::zeros(e.config().action_layout());
        assert!(matches!(e.step(&raw), Err(Error::Usage(_))));
        e.reset().unwrap();
        for i in 1..=5 {
            let out = e.step(&raw).unwrap();
            assert_eq!(out.done, i == 5);
        }
        assert!(matches!(e.step(&raw), Err(Error::EpisodeFinished)));
        e.reset().unwrap();
        assert!(e.step(&raw).is_ok());
    }

    #[test]
    fn sdma_mode_has_no_common_stream() {
        let cfg = sdma_variant(&EnvConfig::default());
        assert_eq!(cfg.action_layout().dim(), 4);
        assert_eq!(EnvConfig::default().action_layout().dim(), 9);
        let mut e = env(cfg, 5);
        e.reset().unwrap();
        let raw = RawAction {
            power_logits: vec![0.3, -1.0, 2.0, 0.0],
            split_logits: vec![],
        };
        let out = e.step(&raw).unwrap();
        assert_eq!(out.allocation.mu[0], 0.0);
        assert!(out.allocation.c.iter().all(|&c| c == 0.0));
        let private: f64 = out.rates.private_rates.iter().sum();
        assert!((out.reward - private * (1.0 - out.penalty)).abs() < 1e-12);
    }

    #[test]
    fn zero_qos_reward_is_sum_rate() {
        let mut cfg = EnvConfig::default();
        cfg.qos = vec![0.0; 4];
        let mut e = env(cfg, 6);
        e.reset().unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..20 {
            let flat: Vec<f64> = (0..9).map(|_| 3.0 * rng.standard_normal()).collect();
            let raw = RawAction::from_flat(e.config().action_layout(), &flat).unwrap();
            let out = e.step(&raw).unwrap();
            assert_eq!(out.penalty, 0.0);
            assert_eq!(out.reward, out.sum_rate);
            if out.done {
                e.reset().unwrap();
            }
        }
    }

    fn unit_single_user_env() -> RsmaEnv {
        let cfg = EnvConfig {
            m: 1,
            k: 1,
            p_t_dbm: 10.0 * 2f64.log10(),
            qos: vec![0.0],
            episode_len: 3,
            ..EnvConfig::default()
        };
        let mut e = env(cfg, 0);
        e.reset().unwrap();
        let h = ComplexMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        e.set_channel(ChannelRealization {
            true_channel: h.clone(),
            estimated_channel: h,
            p_t_linear: 2.0,
        })
        .unwrap();
        e
    }

    #[test]
    fn hand_built_single_user_sum_rate() {
        let mut e = unit_single_user_env();
        let out = e.step_with_fractions(&[0.5, 0.5], &[1.0]).unwrap();
        let expected = 1.5f64.log2() + 1.0;
        assert!((out.sum_rate - expected).abs() < 1e-12);
        assert!((out.sum_rate - 1.58496).abs() < 1e-5);
        assert!((out.allocation.c[0] - 1.5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn sdma_not_better_than_rsma_grid_on_single_user() {
        // Grid oracle over mu_c for the single-user instance: the best RSMA
        // split is never below the SDMA (all-private) point.
        let sdma_rate = {
            let mut e = unit_single_user_env();
            e.step_with_fractions(&[0.0, 1.0], &[1.0]).unwrap().sum_rate
        };
        let best_rsma = (0..=100)
            .map(|i| {
                let mu_c = i as f64 / 100.0;
                let mut e = unit_single_user_env();
                e.step_with_fractions(&[mu_c, 1.0 - mu_c], &[1.0]).unwrap().sum_rate
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(sdma_rate <= best_rsma + 1e-12);

        let mut cfg = sdma_variant(&unit_single_user_env().config().clone());
        cfg.qos = vec![0.0];
        let mut e = env(cfg, 0);
        e.reset().unwrap();
        let h = ComplexMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        e.set_channel(ChannelRealization {
            true_channel: h.clone(),
            estimated_channel: h,
            p_t_linear: 2.0,
        })
        .unwrap();
        let out = e.step_with_fractions(&[0.5, 0.5], &[1.0]).unwrap();
        assert!((out.sum_rate - sdma_rate).abs() < 1e-12);
    }

    #[test]
    fn episodes_are_reproducible() {
        let run = || {
            let mut e = env(small_config(2), 77);
            e.reset().unwrap();
            let mut rng = SimRng::seed_from_u64(5);
            (0..5)
                .map(|_| {
                    let flat: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
                    e.step(&RawAction::from_flat(e.config().action_layout(), &flat).unwrap())
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn reward_bounded_by_sum_rate() {
        let mut e = env(EnvConfig::default(), 8);
        e.reset().unwrap();
        let mut rng = SimRng::seed_from_u64(2);
        for _ in 0..400 {
            let flat: Vec<f64> = (0..9).map(|_| 4.0 * rng.standard_normal()).collect();
            let out = e
                .step(&RawAction::from_flat(e.config().action_layout(), &flat).unwrap())
                .unwrap();
            assert!(out.reward >= 0.0 && out.reward <= out.sum_rate);
            assert_eq!(out.reward == out.sum_rate, out.qos_violations == 0 || out.sum_rate == 0.0);
            let steps = out.penalty * 4.0;
            assert_eq!(steps, steps.round());
            assert_eq!(out.observation.len(), 8);
            let f = check_feasibility(&out.allocation, &out.rates, &e.config().qos);
            assert!(f.hard_constraints_ok());
            if out.done {
                e.reset().unwrap();
            }
        }
    }
}
