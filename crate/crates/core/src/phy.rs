//! Rate-splitting physical layer: precoders, SINRs and achievable rates.
//!
//! Noise power is normalised to one. For user `k` with true channel column
//! `h_k`, common precoder `w_c` and private precoders `w_j`:
//!
//! ```text
//! gamma_c[k] = mu_c P |h_k^H w_c|^2 / (sum_j mu_j P |h_k^H w_j|^2 + 1)
//! gamma_p[k] = mu_k P |h_k^H w_k|^2 / (sum_{j != k} mu_j P |h_k^H w_j|^2 + 1)
//! ```
//!
//! Private rates are `log2(1 + gamma_p)`, the common rate is the weakest
//! user's `log2(1 + gamma_c)`, and the sum-rate adds each user's common share
//! `C_k` to its private rate.

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::channel::ComplexMatrix;
use crate::error::{Error, Result};

/// Absolute slack on the inequality constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    pub common: DVector<Complex64>,
    /// One column per user.
    pub private: ComplexMatrix,
}

impl Precoders {
    pub fn antennas(&self) -> usize {
        self.common.len()
    }

    pub fn users(&self) -> usize {
        self.private.ncols()
    }
}

/// Builds the fixed precoders from the BS channel estimate.
///
/// Private streams use maximum-ratio transmission (`w_k = h_k / ||h_k||`).
/// The common stream uses the leading left singular vector of the estimate.
/// When the top singular value is repeated, the vector is the normalised
/// projection of the lowest-index basis vector onto the dominant subspace.
/// Its first nonzero entry is rotated to be real and positive.
pub fn compute_precoders(estimated_channel: &ComplexMatrix) -> Result<Precoders> {
    let (m, k) = estimated_channel.shape();
    if m == 0 || k == 0 {
        return Err(Error::invalid("channel matrix must be non-empty"));
    }
    let mut private = estimated_channel.clone();
    for (j, mut col) in private.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateChannel { column: j });
        }
        col.unscale_mut(norm);
    }
    let common = leading_left_singular_vector(estimated_channel);
    Ok(Precoders { common, private })
}

fn leading_left_singular_vector(h: &ComplexMatrix) -> DVector<Complex64> {
    let m = h.nrows();
    let gram = h * h.adjoint();
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-10 * top.abs().max(1.0);

    // Projector onto the dominant eigenspace.
    let mut projector = ComplexMatrix::zeros(m, m);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda >= top - tol {
            let v = eig.eigenvectors.column(i);
            projector += v * v.adjoint();
        }
    }

    let mut w = (0..m)
        .map(|i| projector.column(i).into_owned())
        .find(|col| col.norm() > 1e-8)
        .unwrap_or_else(|| projector.column(0).into_owned());
    let norm = w.norm();
    w.unscale_mut(norm);
    normalize_phase(&mut w);
    w
}

fn normalize_phase(w: &mut DVector<Complex64>) {
    let scale = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(first) = w.iter().find(|z| z.norm() > 1e-12 * scale).copied() {
        let rot = first.conj() / first.norm();
        for z in w.iter_mut() {
            *z *= rot;
        }
    }
}

/// Squared beam gains `|h_k^H w|^2` for every (user, precoder) pair.
#[derive(Debug, Clone)]
pub struct BeamGains {
    /// `common[k] = |h_k^H w_c|^2`
    pub common: Vec<f64>,
    /// `private[(k, j)] = |h_k^H w_j|^2`
    pub private: nalgebra::DMatrix<f64>,
}

pub fn beam_gains(true_channel: &ComplexMatrix, precoders: &Precoders) -> Result<BeamGains> {
    let (m, k) = true_channel.shape();
    if precoders.antennas() != m || precoders.private.nrows() != m || precoders.users() != k {
        return Err(Error::invalid(format!(
            "precoders are {}x{} but channel is {m}x{k}",
            precoders.private.nrows(),
            precoders.users()
        )));
    }
    let hc = true_channel.adjoint() * &precoders.common;
    let hp = true_channel.adjoint() * &precoders.private;
    Ok(BeamGains {
        common: hc.iter().map(|z| z.norm_sqr()).collect(),
        private: hp.map(|z| z.norm_sqr()),
    })
}

/// Common and private SINRs for power fractions `mu = [mu_c, mu_1..mu_K]`.
pub fn compute_sinrs(
    true_channel: &ComplexMatrix,
    precoders: &Precoders,
    mu: &[f64],
    p_t_linear: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let gains = beam_gains(true_channel, precoders)?;
    sinrs_from_gains(&gains, mu, p_t_linear)
}

pub fn sinrs_from_gains(gains: &BeamGains, mu: &[f64], p_t_linear: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = gains.common.len();
    if mu.len() != k + 1 {
        return Err(Error::invalid(format!(
            "power vector has length {}, expected {}",
            mu.len(),
            k + 1
        )));
    }
    if !(p_t_linear > 0.0) {
        return Err(Error::invalid("transmit power must be positive"));
    }
    if mu.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid("power fractions must be finite and nonnegative"));
    }
    let (mu_c, mu_p) = (mu[0], &mu[1..]);
    let mut gamma_c = Vec::with_capacity(k);
    let mut gamma_p = Vec::with_capacity(k);
    for user in 0..k {
        let row = gains.private.row(user);
        let own = mu_p[user] * p_t_linear * row[user];
        let others: f64 = (0..k)
            .filter(|&j| j != user)
            .map(|j| mu_p[j] * p_t_linear * row[j])
            .sum();
        gamma_c.push(mu_c * p_t_linear * gains.common[user] / (others + own + 1.0));
        gamma_p.push(own / (others + 1.0));
    }
    Ok((gamma_c, gamma_p))
}

pub fn private_rate(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid(format!("SINR must be nonnegative, got {gamma}")));
    }
    Ok((1.0 + gamma).log2())
}

pub fn common_rate(gamma_c: &[f64]) -> Result<f64> {
    if gamma_c.is_empty() {
        return Err(Error::invalid("common rate needs at least one user"));
    }
    gamma_c
        .iter()
        .map(|&g| private_rate(g))
        .try_fold(f64::INFINITY, |acc, r| r.map(|r| acc.min(r)))
}

pub fn sum_rate(c: &[f64], private_rates: &[f64]) -> Result<f64> {
    if c.len() != private_rates.len() {
        return Err(Error::invalid(format!(
            "common split has length {} but there are {} private rates",
            c.len(),
            private_rates.len()
        )));
    }
    Ok(c.iter().zip(private_rates).map(|(a, b)| a + b).sum())
}

/// Power fractions and common-rate shares.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `[mu_c, mu_1, ..., mu_K]`
    pub mu: Vec<f64>,
    /// `[C_1, ..., C_K]` in bits/s/Hz.
    pub c: Vec<f64>,
}

impl Allocation {
    pub fn users(&self) -> usize {
        self.c.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub gamma_c: Vec<f64>,
    pub gamma_p: Vec<f64>,
    pub private_rates: Vec<f64>,
    pub common_rate: f64,
    pub total_rates: Vec<f64>,
    pub sum_rate: f64,
}

/// SINRs and rates before the common rate has been split among users.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRates {
    pub gamma_c: Vec<f64>,
    pub gamma_p: Vec<f64>,
    pub private_rates: Vec<f64>,
    pub common_rate: f64,
}

impl LinkRates {
    pub fn evaluate(gains: &BeamGains, mu: &[f64], p_t_linear: f64) -> Result<Self> {
        let (gamma_c, gamma_p) = sinrs_from_gains(gains, mu, p_t_linear)?;
        let private_rates = gamma_p.iter().map(|&g| private_rate(g)).collect::<Result<Vec<_>>>()?;
        let common_rate = common_rate(&gamma_c)?;
        Ok(Self {
            gamma_c,
            gamma_p,
            private_rates,
            common_rate,
        })
    }

    /// Completes the report once the common shares `c` are fixed.
    pub fn with_split(self, c: &[f64]) -> Result<RateReport> {
        let sum_rate = sum_rate(c, &self.private_rates)?;
        let total_rates = c.iter().zip(&self.private_rates).map(|(a, b)| a + b).collect();
        Ok(RateReport {
            gamma_c: self.gamma_c,
            gamma_p: self.gamma_p,
            private_rates: self.private_rates,
            common_rate: self.common_rate,
            total_rates,
            sum_rate,
        })
    }
}

pub fn rate_report(
    true_channel: &ComplexMatrix,
    precoders: &Precoders,
    alloc: &Allocation,
    p_t_linear: f64,
) -> Result<RateReport> {
    let gains = beam_gains(true_channel, precoders)?;
    LinkRates::evaluate(&gains, &alloc.mu, p_t_linear)?.with_split(&alloc.c)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub power_ok: bool,
    pub common_split_ok: bool,
    pub qos_ok: Vec<bool>,
    pub nonneg_ok: bool,
}

impl FeasibilityReport {
    /// Power, common-split and nonnegativity constraints together.
    pub fn hard_constraints_ok(&self) -> bool {
        self.power_ok && self.common_split_ok && self.nonneg_ok
    }

    pub fn all_ok(&self) -> bool {
        self.hard_constraints_ok() && self.qos_ok.iter().all(|&ok| ok)
    }
}

pub fn check_feasibility(alloc: &Allocation, report: &RateReport, qos: &[f64]) -> FeasibilityReport {
    let power: f64 = alloc.mu.iter().sum();
    let split: f64 = alloc.c.iter().sum();
    FeasibilityReport {
        power_ok: power <= 1.0 + FEASIBILITY_TOL,
        common_split_ok: split <= report.common_rate + FEASIBILITY_TOL,
        qos_ok: report
            .total_rates
            .iter()
            .zip(qos)
            .map(|(total, q)| total >= q)
            .collect(),
        nonneg_ok: alloc.c.iter().all(|&x| x >= 0.0),
    }
}
