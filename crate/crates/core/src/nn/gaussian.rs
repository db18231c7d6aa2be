//! Diagonal Gaussian over unconstrained action logits.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::SimRng;

fn check(mean: &[f64], log_std: &[f64], x: &[f64]) -> Result<()> {
    if mean.len() != log_std.len() || x.len() != mean.len() {
        return Err(Error::invalid("mean, log_std and sample must have equal length"));
    }
    if log_std.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("log standard deviation must be finite"));
    }
    Ok(())
}

/// `sum_d [ -(x_d - m_d)^2 / (2 s_d^2) - log s_d - log(2 pi) / 2 ]`
pub fn log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> Result<f64> {
    check(mean, log_std, x)?;
    Ok(mean
        .iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), x)| {
            let z = (x - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum())
}

/// Partial derivatives of [`log_prob`] with respect to the mean and the log
/// standard deviation.
pub fn log_prob_grad(mean: &[f64], log_std: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check(mean, log_std, x)?;
    let mut d_mean = Vec::with_capacity(mean.len());
    let mut d_log_std = Vec::with_capacity(mean.len());
    for ((m, ls), x) in mean.iter().zip(log_std).zip(x) {
        let inv_var = (-2.0 * ls).exp();
        let diff = x - m;
        d_mean.push(diff * inv_var);
        d_log_std.push(diff * diff * inv_var - 1.0);
    }
    Ok((d_mean, d_log_std))
}

/// Differential entropy; its gradient in each log-std is exactly 1.
pub fn entropy(log_std: &[f64]) -> f64 {
    log_std
        .iter()
        .map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln())
        .sum()
}

pub fn sample(mean: &[f64], log_std: &[f64], rng: &mut SimRng) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, ls)| m + ls.exp() * rng.standard_normal())
        .collect()
}
