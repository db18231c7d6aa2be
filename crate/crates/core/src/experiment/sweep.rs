//! Transmit-power and QoS sweeps.
//!
//! Every (scheme, CSIT mode, sweep point, seed) is a separate training run in
//! its own directory under `<out>/<power|qos>/<point>/`. A run whose directory
//! already holds a checkpoint trained with the same resolved configuration
//! is reused instead of retrained. Each trained policy is then evaluated with
//! exploration disabled.

use std::fs;

use super::config::{csit_label, RunConfig, Scheme};
use super::report::{emit_plot_data, raw_csv, Observation, SummaryRow};
use super::run::{evaluate_run, train_or_load};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepAxis {
    Power,
    Qos,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Power => "power",
            SweepAxis::Qos => "qos",
        }
    }

    pub fn x_variable(self) -> &'static str {
        match self {
            SweepAxis::Power => "p_t_dbm",
            SweepAxis::Qos => "qos",
        }
    }

    fn apply(self, config: &mut RunConfig, x: f64) {
        match self {
            SweepAxis::Power => config.env.p_t_dbm = x,
            SweepAxis::Qos => config.env.qos = vec![x; config.env.k],
        }
    }
}

/// Raw observations and their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub observations: Vec<Observation>,
    pub summary: Vec<SummaryRow>,
}

/// Configuration of one sweep point.
pub fn point_config(base: &RunConfig, axis: SweepAxis, scheme: Scheme, perfect_csit: bool, x: f64) -> RunConfig {
    let mut c = base.clone();
    c.algorithm = scheme.algorithm;
    c.env.mode = scheme.mode;
    c.env.channel.perfect_csit = perfect_csit;
    axis.apply(&mut c, x);
    c.out = base.out.join(axis.name()).join(format!("x{x}"));
    c
}

pub fn run_sweep(base: &RunConfig, axis: SweepAxis, points: &[f64]) -> Result<SweepResult> {
    if points.is_empty() {
        return Err(Error::Usage(format!("{} sweep needs at least one point", axis.name())));
    }
    if base.sweep.schemes.is_empty() || base.sweep.csit.is_empty() {
        return Err(Error::Usage("sweep needs at least one scheme and one CSIT mode".into()));
    }
    let mut observations = Vec::new();
    for &scheme in &base.sweep.schemes {
        for &perfect in &base.sweep.csit {
            for &x in points {
                let config = point_config(base, axis, scheme, perfect, x);
                config.validate()?;
                for &seed in &base.seeds {
                    let (_, policy) = train_or_load(&config, seed)?;
                    let eval = evaluate_run(&policy, &config, seed)?;
                    observations.push(Observation {
                        scheme: scheme.to_string(),
                        csit: csit_label(perfect).to_string(),
                        x_variable: axis.x_variable().to_string(),
                        x,
                        seed,
                        mean_reward: eval.mean_reward,
                        mean_sum_rate: eval.mean_sum_rate,
                        qos_violation_fraction: eval.qos_violation_fraction,
                    });
                }
            }
        }
    }
    fs::create_dir_all(&base.out)?;
    let name = format!("{}_sweep", axis.name());
    fs::write(base.out.join(format!("{name}_raw.csv")), raw_csv(&observations))?;
    let summary = emit_plot_data(&observations, &base.out, &name)?;
    Ok(SweepResult { observations, summary })
}

/// Average evaluation sum-rate against transmit power (dBm).
pub fn run_power_sweep(base: &RunConfig, p_dbm: &[f64]) -> Result<SweepResult> {
    run_sweep(base, SweepAxis::Power, p_dbm)
}

/// Average evaluation reward and QoS violations against the per-user
/// QoS threshold.
pub fn run_qos_sweep(base: &RunConfig, qos: &[f64]) -> Result<SweepResult> {
    run_sweep(base, SweepAxis::Qos, qos)
}
