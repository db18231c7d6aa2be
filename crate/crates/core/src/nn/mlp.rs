//! Dense tanh network with a Gaussian policy head and a state-value head.
//!
//! All parameters live in one flat `Vec<f64>`; a [`Layout`] maps each layer
//! onto a contiguous range. Weights are row-major `(out, in)`. The flat
//! order is: policy trunk layers, mean head, value trunk layers (only when
//! the trunk is not shared), value head, log standard deviations.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    /// Power logits (K+1 for RSMA, K for SDMA).
    pub power_out: usize,
    /// Common-split logits (K for RSMA, 0 for SDMA).
    pub split_out: usize,
    /// Value head reads the policy trunk instead of its own trunk.
    pub shared_trunk: bool,
}

impl Architecture {
    pub fn action_dim(&self) -> usize {
        self.power_out + self.split_out
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.action_dim() == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    offset: usize,
    n_in: usize,
    n_out: usize,
}

impl Dense {
    fn weights(&self) -> Range<usize> {
        self.offset..self.offset + self.n_in * self.n_out
    }

    fn bias(&self) -> Range<usize> {
        let start = self.offset + self.n_in * self.n_out;
        start..start + self.n_out
    }

    fn end(&self) -> usize {
        self.offset + (self.n_in + 1) * self.n_out
    }

    fn apply(&self, params: &[f64], input: &[f64], out: &mut Vec<f64>) {
        let w = &params[self.weights()];
        let b = &params[self.bias()];
        out.clear();
        out.extend((0..self.n_out).map(|o| {
            let row = &w[o * self.n_in..(o + 1) * self.n_in];
            b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
        }));
    }

    /// Accumulates parameter gradients for `dout` and returns `d input`.
    fn backprop(&self, params: &[f64], input: &[f64], dout: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let w = &params[self.weights()];
        let mut dinput = vec![0.0; self.n_in];
        let (gw, gb) = grads[self.offset..self.end()].split_at_mut(self.n_in * self.n_out);
        for (o, &d) in dout.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            let row = o * self.n_in;
            for i in 0..self.n_in {
                gw[row + i] += d * input[i];
                dinput[i] += d * w[row + i];
            }
        }
        dinput
    }
}

/// Named parameter blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    PolicyTrunk,
    MeanHead,
    ValueTrunk,
    ValueHead,
    LogStd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    policy_trunk: Vec<Dense>,
    mean_head: Dense,
    value_trunk: Vec<Dense>,
    value_head: Dense,
    log_std: Range<usize>,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let mut offset = 0;
        let stack = |sizes: &[usize], offset: &mut usize| -> Vec<Dense> {
            let mut n_in = arch.input;
            sizes
                .iter()
                .map(|&n_out| {
                    let d = Dense {
                        offset: *offset,
                        n_in,
                        n_out,
                    };
                    *offset = d.end();
                    n_in = n_out;
                    d
                })
                .collect()
        };
        let policy_trunk = stack(&arch.hidden, &mut offset);
        let trunk_out = arch.hidden.last().copied().unwrap_or(arch.input);
        let mean_head = Dense {
            offset,
            n_in: trunk_out,
            n_out: arch.action_dim(),
        };
        offset = mean_head.end();
        let value_trunk = if arch.shared_trunk {
            Vec::new()
        } else {
            stack(&arch.hidden, &mut offset)
        };
        let value_head = Dense {
            offset,
            n_in: trunk_out,
            n_out: 1,
        };
        offset = value_head.end();
        let log_std = offset..offset + arch.action_dim();
        Self {
            policy_trunk,
            mean_head,
            value_trunk,
            value_head,
            log_std,
        }
    }

    pub fn len(&self) -> usize {
        self.log_std.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self, block: Block) -> Range<usize> {
        let span = |layers: &[Dense]| match (layers.first(), layers.last()) {
            (Some(a), Some(b)) => a.offset..b.end(),
            _ => 0..0,
        };
        match block {
            Block::PolicyTrunk => span(&self.policy_trunk),
            Block::MeanHead => self.mean_head.offset..self.mean_head.end(),
            Block::ValueTrunk => span(&self.value_trunk),
            Block::ValueHead => self.value_head.offset..self.value_head.end(),
            Block::LogStd => self.log_std.clone(),
        }
    }
}

/// Network outputs for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    /// Means of the Gaussian over `[power logits, split logits]`.
    pub mean: Vec<f64>,
    pub value: f64,
    power_out: usize,
}

impl PolicyOutput {
    pub fn power_logits(&self) -> &[f64] {
        &self.mean[..self.power_out]
    }

    pub fn split_logits(&self) -> &[f64] {
        &self.mean[self.power_out..]
    }
}

/// Activations recorded by a forward pass, consumed by [`MlpParams::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    recorded: Option<Recorded>,
}

#[derive(Debug, Clone)]
struct Recorded {
    input: Vec<f64>,
    policy_hidden: Vec<Vec<f64>>,
    value_hidden: Vec<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_recorded(&self) -> bool {
        self.recorded.is_some()
    }
}

/// Upstream gradient of a scalar loss with respect to the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrad {
    pub mean: Vec<f64>,
    pub value: f64,
    pub log_std: Vec<f64>,
}

impl OutputGrad {
    pub fn zeros(action_dim: usize) -> Self {
        Self {
            mean: vec![0.0; action_dim],
            value: 0.0,
            log_std: vec![0.0; action_dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: Architecture,
    layout: Layout,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            values: vec![0.0; params.values.len()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|g| g.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|g| *g = 0.0);
    }
}

impl MlpParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        Ok(Self {
            values: vec![0.0; layout.len()],
            arch,
            layout,
        })
    }

    /// Glorot-uniform weights, zero biases. The mean head starts at 1% scale
    /// so the initial policy is close to the uniform allocation.
    pub fn init(arch: Architecture, init_log_std: f64, rng: &mut SimRng) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let layers: Vec<(Dense, f64)> = params
            .layout
            .policy_trunk
            .iter()
            .chain(&params.layout.value_trunk)
            .map(|d| (*d, 1.0))
            .chain([(params.layout.mean_head, 0.01), (params.layout.value_head, 1.0)])
            .collect();
        for (dense, gain) in layers {
            let limit = gain * (6.0 / (dense.n_in + dense.n_out) as f64).sqrt();
            for w in &mut params.values[dense.weights()] {
                *w = limit * (2.0 * rng.uniform() - 1.0);
            }
        }
        let log_std = params.layout.log_std.clone();
        params.values[log_std].fill(init_log_std);
        Ok(params)
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        if values.len() != params.values.len() {
            return Err(Error::invalid(format!(
                "architecture needs {} parameters, got {}",
                params.values.len(),
                values.len()
            )));
        }
        params.values = values;
        Ok(params)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.values[self.layout.log_std.clone()]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn forward(&self, observation: &[f64]) -> Result<PolicyOutput> {
        self.run(observation, None)
    }

    /// Forward pass that records activations into `tape` for a later
    /// [`backward`](Self::backward).
    pub fn forward_recorded(&self, observation: &[f64], tape: &mut Tape) -> Result<PolicyOutput> {
        self.run(observation, Some(tape))
    }

    fn trunk(&self, layers: &[Dense], input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        for dense in layers {
            let prev = acts.last().map(Vec::as_slice).unwrap_or(input);
            let mut out = Vec::with_capacity(dense.n_out);
            dense.apply(&self.values, prev, &mut out);
            out.iter_mut().for_each(|x| *x = x.tanh());
            acts.push(out);
        }
        acts
    }

    fn run(&self, observation: &[f64], tape: Option<&mut Tape>) -> Result<PolicyOutput> {
        if observation.len() != self.arch.input {
            return Err(Error::invalid(format!(
                "observation has {} entries, network expects {}",
                observation.len(),
                self.arch.input
            )));
        }
        let policy_hidden = self.trunk(&self.layout.policy_trunk, observation);
        let value_hidden = self.trunk(&self.layout.value_trunk, observation);

        let features = policy_hidden.last().map(Vec::as_slice).unwrap_or(observation);
        let mut mean = Vec::new();
        self.layout.mean_head.apply(&self.values, features, &mut mean);

        let value_features = if self.arch.shared_trunk {
            features
        } else {
            value_hidden.last().map(Vec::as_slice).unwrap_or(observation)
        };
        let mut value = Vec::new();
        self.layout.value_head.apply(&self.values, value_features, &mut value);

        if let Some(tape) = tape {
            tape.recorded = Some(Recorded {
                input: observation.to_vec(),
                policy_hidden,
                value_hidden,
            });
        }
        Ok(PolicyOutput {
            mean,
            value: value[0],
            power_out: self.arch.power_out,
        })
    }

    /// Reverse-mode pass: accumulates `d loss / d params` into `grads` given
    /// the loss gradient with respect to the outputs of the recorded forward.
    pub fn backward(&self, tape: &Tape, upstream: &OutputGrad, grads: &mut Gradients) -> Result<()> {
        let rec = tape
            .recorded
            .as_ref()
            .ok_or_else(|| Error::Usage("backward called without a recorded forward pass".into()))?;
        let action_dim = self.arch.action_dim();
        if upstream.mean.len() != action_dim || upstream.log_std.len() != action_dim {
            return Err(Error::invalid("output gradient does not match the architecture"));
        }
        if grads.values.len() != self.values.len() {
            return Err(Error::invalid("gradient buffer does not match the parameters"));
        }
        let g = &mut grads.values;

        let features = rec.policy_hidden.last().map(Vec::as_slice).unwrap_or(&rec.input);
        let mut d_features = self
            .layout
            .mean_head
            .backprop(&self.values, features, &upstream.mean, g);

        let value_features = if self.arch.shared_trunk {
            features
        } else {
            rec.value_hidden.last().map(Vec::as_slice).unwrap_or(&rec.input)
        };
        let d_value_features =
            self.layout
                .value_head
                .backprop(&self.values, value_features, &[upstream.value], g);
        if self.arch.shared_trunk {
            d_features
                .iter_mut()
                .zip(&d_value_features)
                .for_each(|(a, b)| *a += b);
        } else {
            self.trunk_backward(&self.layout.value_trunk, &rec.value_hidden, &rec.input, d_value_features, g);
        }
        self.trunk_backward(&self.layout.policy_trunk, &rec.policy_hidden, &rec.input, d_features, g);

        for (dst, src) in g[self.layout.log_std.clone()].iter_mut().zip(&upstream.log_std) {
            *dst += src;
        }
        Ok(())
    }

    fn trunk_backward(&self, layers: &[Dense], acts: &[Vec<f64>], input: &[f64], mut d_out: Vec<f64>, g: &mut [f64]) {
        for (l, dense) in layers.iter().enumerate().rev() {
            let act = &acts[l];
            let d_pre: Vec<f64> = d_out.iter().zip(act).map(|(d, a)| d * (1.0 - a * a)).collect();
            let layer_input = if l == 0 { input } else { &acts[l - 1] };
            d_out = dense.backprop(&self.values, layer_input, &d_pre, g);
        }
    }
}
