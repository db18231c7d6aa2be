//! Independent oracles and helpers shared by the integration suites.
#![allow(dead_code)]

use num_complex::Complex64;
use rsma_core::channel::ComplexMatrix;
use rsma_core::env::{ActionLayout, RawAction};
use rsma_core::nn::{gaussian, Architecture, MlpParams};
use rsma_core::phy::Precoders;
use rsma_core::ppo::{observation_features, Transition};
use rsma_core::rng::SimRng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Below this magnitude a gradient entry is compared absolutely; central
/// differences at `FD_STEP` carry round-off of roughly `1e-16 * |f| / h`.
pub const GRAD_ABS_FLOOR: f64 = 1e-8;

/// Rates computed term by term from explicit inner products.
#[derive(Debug, Clone)]
pub struct ScalarRates {
    pub gamma_c: Vec<f64>,
    pub gamma_p: Vec<f64>,
    pub private_rates: Vec<f64>,
    pub common_rate: f64,
    pub shares: Vec<f64>,
    pub sum_rate: f64,
}

fn inner(h: &ComplexMatrix, user: usize, w: impl Fn(usize) -> Complex64) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..h.nrows() {
        acc += h[(a, user)].conj() * w(a);
    }
    acc.re * acc.re + acc.im * acc.im
}

pub fn scalar_rates(h: &ComplexMatrix, p: &Precoders, mu: &[f64], split: &[f64], pt: f64) -> ScalarRates {
    let k = h.ncols();
    let mut gamma_c = Vec::new();
    let mut gamma_p = Vec::new();
    for user in 0..k {
        let mut all = 0.0;
        let mut others = 0.0;
        for j in 0..k {
            let term = mu[1 + j] * pt * inner(h, user, |a| p.private[(a, j)]);
            all += term;
            if j != user {
                others += term;
            }
        }
        gamma_c.push(mu[0] * pt * inner(h, user, |a| p.common[a]) / (all + 1.0));
        gamma_p.push(mu[1 + user] * pt * inner(h, user, |a| p.private[(a, user)]) / (others + 1.0));
    }
    let private_rates: Vec<f64> = gamma_p.iter().map(|g| (1.0 + g).log2()).collect();
    let mut common_rate = f64::INFINITY;
    for g in &gamma_c {
        common_rate = common_rate.min((1.0 + g).log2());
    }
    let shares: Vec<f64> = split.iter().map(|phi| phi * common_rate).collect();
    let mut sum_rate = 0.0;
    for user in 0..k {
        sum_rate += shares[user] + private_rates[user];
    }
    ScalarRates {
        gamma_c,
        gamma_p,
        private_rates,
        common_rate,
        shares,
        sum_rate,
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn random_simplex(rng: &mut SimRng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.uniform().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + FD_STEP;
            let up = f(&probe);
            probe[i] = x[i] - FD_STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest per-entry error relative to the entry magnitude, or an absolute
/// error for entries below the floor. Passing means `<= GRAD_REL_TOL`.
pub fn worst_relative_error(numeric: &[f64], analytic: &[f64]) -> f64 {
    assert_eq!(numeric.len(), analytic.len());
    numeric
        .iter()
        .zip(analytic)
        .map(|(n, a)| (n - a).abs() / n.abs().max(a.abs()).max(GRAD_ABS_FLOOR / GRAD_REL_TOL))
        .fold(0.0, f64::max)
}

pub fn arch(input: usize, hidden: &[usize], layout: ActionLayout, shared: bool) -> Architecture {
    Architecture {
        input,
        hidden: hidden.to_vec(),
        power_out: layout.power,
        split_out: layout.split,
        shared_trunk: shared,
    }
}

/// Transitions whose probability ratio under `params` equals `ratios[i]`
/// exactly, with the given advantages and random observations and returns.
pub fn transitions_with_ratios(
    params: &MlpParams,
    layout: ActionLayout,
    ratios: &[f64],
    advantages: &[f64],
    rng: &mut SimRng,
) -> Vec<Transition> {
    let input = params.architecture().input;
    ratios
        .iter()
        .zip(advantages)
        .map(|(&ratio, &advantage)| {
            let observation: Vec<f64> = (0..input).map(|_| 50.0 * rng.uniform()).collect();
            let out = params.forward(&observation_features(&observation)).unwrap();
            let x = gaussian::sample(&out.mean, params.log_std(), rng);
            let log_prob = gaussian::log_prob(&out.mean, params.log_std(), &x).unwrap();
            Transition {
                observation,
                mean: out.mean.clone(),
                log_std: params.log_std().to_vec(),
                sampled: RawAction::from_flat(layout, &x).unwrap(),
                log_prob_old: log_prob - ratio.ln(),
                reward: 0.0,
                value_estimate: out.value,
                done: false,
                sum_rate: 0.0,
                violation_fraction: 0.0,
                return_to_go: 3.0 * rng.standard_normal(),
                advantage,
            }
        })
        .collect()
}
