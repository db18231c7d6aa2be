//! First-order optimiser state.
//!
//! The policy objective is maximised by descending on its negation. The
//! default rule is Adam; `Sgd` performs the plain step `theta -= lr * g`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    #[default]
    Adam,
    Sgd,
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::Adam => "adam",
            UpdateRule::Sgd => "sgd",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adam" => Ok(UpdateRule::Adam),
            "sgd" => Ok(UpdateRule::Sgd),
            other => Err(Error::config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rule: UpdateRule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rule: UpdateRule::Adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub(crate) first_moment: Vec<f64>,
    pub(crate) second_moment: Vec<f64>,
    pub(crate) steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.first_moment, &self.second_moment)
    }

    /// One descent step `params -= update(grads)`. A non-finite gradient, or
    /// an update that would make a parameter non-finite, leaves `params`
    /// unchanged and reports divergence.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::invalid("optimizer state, parameters and gradients differ in size"));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!("non-finite gradient at parameter {i}")));
        }
        let cfg = self.config;
        let updates: Vec<f64> = match cfg.rule {
            UpdateRule::Sgd => grads.iter().map(|g| cfg.learning_rate * g).collect(),
            UpdateRule::Adam => {
                let t = self.steps as i32 + 1;
                let bias1 = 1.0 - cfg.beta1.powi(t);
                let bias2 = 1.0 - cfg.beta2.powi(t);
                grads
                    .iter()
                    .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
                    .map(|(&g, (m, v))| {
                        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                        let m_hat = *m / bias1;
                        let v_hat = *v / bias2;
                        cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon)
                    })
                    .collect()
            }
        };
        if params.iter().zip(&updates).any(|(p, u)| !(p - u).is_finite()) {
            return Err(Error::Divergence("update produced a non-finite parameter".into()));
        }
        params.iter_mut().zip(&updates).for_each(|(p, u)| *p -= u);
        self.steps += 1;
        Ok(())
    }
}
