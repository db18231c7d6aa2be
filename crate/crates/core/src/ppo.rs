//! Proximal Policy Optimization with a clipped surrogate.
//!
//! The policy is a diagonal Gaussian over action logits whose mean comes from
//! [`MlpParams`]; the environment maps sampled logits through Softmax. Each
//! update collects a rollout, estimates advantages with GAE, normalises them
//! over the buffer and runs several epochs of shuffled minibatch descent on
//!
//! ```text
//! loss = -mean min(r A, u(eps, A)) + c_v mean (V - R)^2 - c_e mean H
//! ```
//!
//! where `r` is the new/old probability ratio and `u` the clip function.

use rand::seq::SliceRandom;

use crate::env::{Environment, RawAction};
use crate::error::{Error, Result};
use crate::nn::{gaussian, Adam, AdamConfig, Architecture, Gradients, MlpParams, OutputGrad, Tape, UpdateRule};
use crate::rng::SimRng;

/// Log-ratios are clamped to this magnitude before exponentiation.
pub const LOG_RATIO_CLAMP: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub discount: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub rollout_steps: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub optimizer: UpdateRule,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub shared_trunk: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            discount: 0.9,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 10,
            minibatch: 64,
            rollout_steps: 2000,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 3e-4,
            optimizer: UpdateRule::Adam,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            shared_trunk: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(msg.to_string()));
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("ppo.discount must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("ppo.gae_lambda must lie in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("ppo.clip must be positive");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout_steps == 0 {
            return bad("ppo.epochs, ppo.minibatch and ppo.rollout_steps must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("ppo.learning_rate must be positive");
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("ppo.value_coef and ppo.entropy_coef must be nonnegative");
        }
        if !self.init_log_std.is_finite() {
            return bad("ppo.init_log_std must be finite");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            rule: self.optimizer,
            ..AdamConfig::default()
        }
    }
}

/// `(1 + eps) A` for nonnegative advantages, `(1 - eps) A` otherwise.
pub fn clip_function(eps: f64, advantage: f64) -> f64 {
    if advantage >= 0.0 {
        (1.0 + eps) * advantage
    } else {
        (1.0 - eps) * advantage
    }
}

fn clamped_log_ratio(log_prob_new: f64, log_prob_old: f64) -> (f64, bool) {
    let d = log_prob_new - log_prob_old;
    if d.abs() > LOG_RATIO_CLAMP {
        (d.signum() * LOG_RATIO_CLAMP, true)
    } else {
        (d, false)
    }
}

/// `min(ratio * A, u(eps, A))` with `ratio = exp(new - old)`.
pub fn ppo_objective(log_prob_new: f64, log_prob_old: f64, advantage: f64, eps: f64) -> f64 {
    objective_and_grad(log_prob_new, log_prob_old, advantage, eps).value
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerm {
    pub value: f64,
    pub ratio: f64,
    /// `d value / d log_prob_new`
    pub grad: f64,
    /// The clip branch is the active minimum.
    pub clipped: bool,
}

pub fn objective_and_grad(log_prob_new: f64, log_prob_old: f64, advantage: f64, eps: f64) -> ObjectiveTerm {
    let (log_ratio, saturated) = clamped_log_ratio(log_prob_new, log_prob_old);
    let ratio = log_ratio.exp();
    let surrogate = ratio * advantage;
    let bound = clip_function(eps, advantage);
    if surrogate <= bound {
        ObjectiveTerm {
            value: surrogate,
            ratio,
            grad: if saturated { 0.0 } else { surrogate },
            clipped: false,
        }
    } else {
        ObjectiveTerm {
            value: bound,
            ratio,
            grad: 0.0,
            clipped: true,
        }
    }
}

/// Generalized advantage estimates for one contiguous trajectory segment.
///
/// `dones[t]` marks the last step of an episode; `bootstrap` is the value of
/// the observation following the final step when that step is not terminal.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    discount: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Usage("rewards, values and done flags differ in length".into()));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, live) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 < n {
            (values[t + 1], 1.0)
        } else {
            (bootstrap, 1.0)
        };
        let delta = rewards[t] + discount * next_value * live - values[t];
        running = delta + discount * lambda * live * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// Shift and scale to zero mean, unit (population) variance. Constant inputs
/// are only centred.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x -= mean;
        if std > 1e-12 {
            *x /= std;
        }
    }
}

/// Network input for an observation. SINRs span many orders of magnitude,
/// so the network sees `log2(1 + x)`, the corresponding rate.
pub fn observation_features(observation: &[f64]) -> Vec<f64> {
    observation.iter().map(|&x| (1.0 + x.max(0.0)).log2()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    /// Policy mean at collection time.
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub sampled: RawAction,
    pub log_prob_old: f64,
    pub reward: f64,
    pub value_estimate: f64,
    pub done: bool,
    pub sum_rate: f64,
    pub violation_fraction: f64,
    pub return_to_go: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    /// Value of the observation after the last transition (0 if terminal).
    pub bootstrap_value: f64,
    estimated: bool,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_estimated(&self) -> bool {
        self.estimated
    }

    /// Indices one past each episode end.
    pub fn episode_ends(&self) -> Vec<usize> {
        self.transitions
            .iter()
            .enumerate()
            .filter(|(_, t)| t.done)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Fills `advantage` (normalised over the buffer) and `return_to_go`
    /// (raw advantage plus value estimate).
    pub fn estimate_advantages(&mut self, discount: f64, lambda: f64) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::Usage("cannot estimate advantages of an empty buffer".into()));
        }
        let rewards: Vec<f64> = self.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value_estimate).collect();
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        let mut adv = compute_gae(&rewards, &values, &dones, self.bootstrap_value, discount, lambda)?;
        for (t, a) in self.transitions.iter_mut().zip(&adv) {
            t.return_to_go = a + t.value_estimate;
        }
        normalize(&mut adv);
        for (t, a) in self.transitions.iter_mut().zip(adv) {
            t.advantage = a;
        }
        self.estimated = true;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub action: RawAction,
    pub mean: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateMetrics {
    pub first_minibatch_mean_ratio: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub minibatches: usize,
}

/// Loss, gradient and diagnostics for one minibatch.
#[derive(Debug, Clone)]
pub struct MinibatchLoss {
    pub loss: f64,
    pub grads: Gradients,
    pub mean_ratio: f64,
    pub clipped: usize,
    pub objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub fn minibatch_loss(
    params: &MlpParams,
    transitions: &[Transition],
    indices: &[usize],
    config: &PpoConfig,
) -> Result<MinibatchLoss> {
    if indices.is_empty() {
        return Err(Error::Usage("empty minibatch".into()));
    }
    let b = indices.len() as f64;
    let log_std = params.log_std().to_vec();
    let entropy = gaussian::entropy(&log_std);
    let mut grads = Gradients::zeros_like(params);
    let mut tape = Tape::new();
    let (mut objective, mut value_loss, mut ratio_sum, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    for &i in indices {
        let t = &transitions[i];
        let x = t.sampled.to_flat();
        let out = params.forward_recorded(&observation_features(&t.observation), &mut tape)?;
        let log_prob = gaussian::log_prob(&out.mean, &log_std, &x)?;
        let term = objective_and_grad(log_prob, t.log_prob_old, t.advantage, config.clip);
        let (d_mean, d_log_std) = gaussian::log_prob_grad(&out.mean, &log_std, &x)?;
        let w = -term.grad / b;
        let residual = out.value - t.return_to_go;
        let upstream = OutputGrad {
            mean: d_mean.iter().map(|d| w * d).collect(),
            value: 2.0 * config.value_coef * residual / b,
            log_std: d_log_std.iter().map(|d| w * d - config.entropy_coef / b).collect(),
        };
        params.backward(&tape, &upstream, &mut grads)?;
        objective += term.value;
        value_loss += residual * residual;
        ratio_sum += term.ratio;
        clipped += term.clipped as usize;
    }
    objective /= b;
    value_loss /= b;
    let loss = -objective + config.value_coef * value_loss - config.entropy_coef * entropy;
    Ok(MinibatchLoss {
        loss,
        grads,
        mean_ratio: ratio_sum / b,
        clipped,
        objective,
        value_loss,
        entropy,
    })
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub config: PpoConfig,
    pub params: MlpParams,
    pub optimizer: Adam,
    cursor: Option<Vec<f64>>,
}

impl PpoAgent {
    pub fn new(config: PpoConfig, observation_dim: usize, layout: crate::env::ActionLayout, rng: &mut SimRng) -> Result<Self> {
        config.validate()?;
        let arch = Architecture {
            input: observation_dim,
            hidden: config.hidden.clone(),
            power_out: layout.power,
            split_out: layout.split,
            shared_trunk: config.shared_trunk,
        };
        let params = MlpParams::init(arch, config.init_log_std, rng)?;
        let optimizer = Adam::new(config.adam(), params.len());
        Ok(Self {
            config,
            params,
            optimizer,
            cursor: None,
        })
    }

    pub fn from_parts(config: PpoConfig, params: MlpParams, optimizer: Adam) -> Result<Self> {
        config.validate()?;
        if optimizer.moments().0.len() != params.len() {
            return Err(Error::invalid("optimizer state does not match parameters"));
        }
        Ok(Self {
            config,
            params,
            optimizer,
            cursor: None,
        })
    }

    fn layout(&self) -> crate::env::ActionLayout {
        let arch = self.params.architecture();
        crate::env::ActionLayout {
            power: arch.power_out,
            split: arch.split_out,
        }
    }

    pub fn act(&self, observation: &[f64], rng: &mut SimRng) -> Result<ActionSample> {
        let out = self.params.forward(&observation_features(observation))?;
        let log_std = self.params.log_std();
        let x = gaussian::sample(&out.mean, log_std, rng);
        let log_prob = gaussian::log_prob(&out.mean, log_std, &x)?;
        Ok(ActionSample {
            action: RawAction::from_flat(self.layout(), &x)?,
            mean: out.mean,
            log_prob,
            value: out.value,
        })
    }

    /// The policy mean, used for evaluation with exploration disabled.
    pub fn act_deterministic(&self, observation: &[f64]) -> Result<RawAction> {
        let out = self.params.forward(&observation_features(observation))?;
        RawAction::from_flat(self.layout(), &out.mean)
    }

    pub fn value(&self, observation: &[f64]) -> Result<f64> {
        Ok(self.params.forward(&observation_features(observation))?.value)
    }

    /// Collects `steps` transitions, resetting the environment whenever an
    /// episode ends. An unfinished episode is resumed by the next call.
    pub fn collect_rollout(&mut self, env: &mut dyn Environment, steps: usize, rng: &mut SimRng) -> Result<RolloutBuffer> {
        if steps == 0 {
            return Err(Error::invalid("rollout needs at least one step"));
        }
        let mut buffer = RolloutBuffer {
            transitions: Vec::with_capacity(steps),
            ..RolloutBuffer::default()
        };
        let mut obs = match self.cursor.take() {
            Some(o) => o,
            None => env.reset()?,
        };
        for _ in 0..steps {
            let sample = self.act(&obs, rng)?;
            let fb = env.step(&sample.action)?;
            buffer.transitions.push(Transition {
                observation: std::mem::take(&mut obs),
                mean: sample.mean,
                log_std: self.params.log_std().to_vec(),
                sampled: sample.action,
                log_prob_old: sample.log_prob,
                reward: fb.reward,
                value_estimate: sample.value,
                done: fb.done,
                sum_rate: fb.sum_rate,
                violation_fraction: fb.violation_fraction,
                return_to_go: 0.0,
                advantage: 0.0,
            });
            obs = if fb.done { env.reset()? } else { fb.observation };
        }
        let last_done = buffer.transitions.last().is_some_and(|t| t.done);
        buffer.bootstrap_value = if last_done { 0.0 } else { self.value(&obs)? };
        self.cursor = Some(obs);
        Ok(buffer)
    }

    /// Multi-epoch minibatch update on a buffer with estimated advantages.
    pub fn update(&mut self, buffer: &RolloutBuffer, rng: &mut SimRng) -> Result<UpdateMetrics> {
        if !buffer.is_estimated() {
            return Err(Error::Usage("estimate advantages before updating".into()));
        }
        let n = buffer.len();
        let mut indices: Vec<usize> = (0..n).collect();
        let mut metrics = UpdateMetrics::default();
        let mut samples = 0usize;
        let mut clipped = 0usize;
        for epoch in 0..self.config.epochs {
            indices.shuffle(rng);
            for (mb, chunk) in indices.chunks(self.config.minibatch).enumerate() {
                let batch = minibatch_loss(&self.params, &buffer.transitions, chunk, &self.config)?;
                if !batch.loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "loss became {} in epoch {epoch}",
                        batch.loss
                    )));
                }
                if epoch == 0 && mb == 0 {
                    metrics.first_minibatch_mean_ratio = batch.mean_ratio;
                }
                let w = chunk.len() as f64;
                metrics.mean_ratio += batch.mean_ratio * w;
                metrics.policy_objective += batch.objective * w;
                metrics.value_loss += batch.value_loss * w;
                metrics.entropy += batch.entropy * w;
                clipped += batch.clipped;
                samples += chunk.len();
                metrics.minibatches += 1;
                self.optimizer.step(self.params.as_mut_slice(), batch.grads.as_slice())?;
                if !self.params.is_finite() {
                    return Err(Error::Divergence("non-finite parameter after update".into()));
                }
            }
        }
        let s = samples as f64;
        metrics.mean_ratio /= s;
        metrics.policy_objective /= s;
        metrics.value_loss /= s;
        metrics.entropy /= s;
        metrics.clip_fraction = clipped as f64 / s;
        Ok(metrics)
    }

    /// One collect / estimate / update cycle.
    pub fn train_iteration(&mut self, env: &mut dyn Environment, rng: &mut SimRng) -> Result<(RolloutBuffer, UpdateMetrics)> {
        let mut buffer = self.collect_rollout(env, self.config.rollout_steps, rng)?;
        buffer.estimate_advantages(self.config.discount, self.config.gae_lambda)?;
        let metrics = self.update(&buffer, rng)?;
        Ok((buffer, metrics))
    }
}
