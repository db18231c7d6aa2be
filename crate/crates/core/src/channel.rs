//! Block-fading channel generation and imperfect channel estimates.
//!
//! Channels are M×K complex matrices: column `k` holds the gains from the M
//! base-station antennas to user `k`. The BS never sees the true channel; it
//! holds an estimate corrupted by an additive Gaussian error whose expected
//! column energy scales as `P_t^-0.6` (linear, milliwatt-referenced power).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub type ComplexMatrix = DMatrix<Complex64>;

/// Exponent of the estimation-error energy law `E{||e_k||^2} = scale * P_t^-0.6`.
pub const ERROR_POWER_EXPONENT: f64 = -0.6;

pub fn dbm_to_linear(p_dbm: f64) -> Result<f64> {
    if !p_dbm.is_finite() {
        return Err(Error::invalid(format!("power {p_dbm} dBm is not finite")));
    }
    Ok(10f64.powf(p_dbm / 10.0))
}

/// Draws an M×K matrix of i.i.d. CN(0, 1) entries (Rayleigh fading).
pub fn sample_true_channel(rng: &mut SimRng, m: usize, k: usize) -> Result<ComplexMatrix> {
    check_dims(m, k)?;
    // Column-major fill keeps the draw order stable: user by user.
    Ok(ComplexMatrix::from_fn(m, k, |_, _| rng.complex_normal(1.0)))
}

fn check_dims(m: usize, k: usize) -> Result<()> {
    if k == 0 || m < k {
        return Err(Error::invalid(format!(
            "need antennas >= users >= 1, got m={m}, k={k}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub true_channel: ComplexMatrix,
    pub estimated_channel: ComplexMatrix,
    pub p_t_linear: f64,
}

impl ChannelRealization {
    pub fn antennas(&self) -> usize {
        self.true_channel.nrows()
    }

    pub fn users(&self) -> usize {
        self.true_channel.ncols()
    }

    pub fn estimation_error(&self) -> ComplexMatrix {
        &self.estimated_channel - &self.true_channel
    }
}

/// Imperfect-CSIT error model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    /// Proportionality constant in front of `P_t^-0.6`.
    pub scale: f64,
    /// When set the estimate equals the true channel.
    pub perfect_csit: bool,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            scale: 1.0,
            perfect_csit: false,
        }
    }
}

impl ErrorModel {
    /// Expected energy of one error column, `scale * P_t^-0.6`.
    pub fn column_energy(&self, p_t_linear: f64) -> f64 {
        self.scale * p_t_linear.powf(ERROR_POWER_EXPONENT)
    }

    /// Builds the BS estimate `true + e`, with each entry of `e` drawn as
    /// CN(0, column_energy / M).
    ///
    /// The error draws are consumed even with perfect CSIT so that the
    /// perfect and imperfect variants of a seed see identical true channels.
    pub fn apply(
        &self,
        true_channel: &ComplexMatrix,
        p_t_linear: f64,
        rng: &mut SimRng,
    ) -> Result<ChannelRealization> {
        if !(p_t_linear > 0.0) || !p_t_linear.is_finite() {
            return Err(Error::invalid(format!(
                "transmit power must be positive and finite, got {p_t_linear}"
            )));
        }
        if !(self.scale >= 0.0) {
            return Err(Error::invalid("error scale must be nonnegative"));
        }
        let m = true_channel.nrows();
        let variance = self.column_energy(p_t_linear) / m as f64;
        let error = ComplexMatrix::from_fn(m, true_channel.ncols(), |_, _| {
            rng.complex_normal(variance)
        });
        let estimated_channel = if self.perfect_csit {
            true_channel.clone()
        } else {
            true_channel + error
        };
        Ok(ChannelRealization {
            true_channel: true_channel.clone(),
            estimated_channel,
            p_t_linear,
        })
    }
}

/// Estimate with the default error model (constant 1, imperfect CSIT).
pub fn apply_estimation_error(
    true_channel: &ComplexMatrix,
    p_t_linear: f64,
    rng: &mut SimRng,
) -> Result<ChannelRealization> {
    ErrorModel::default().apply(true_channel, p_t_linear, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub perfect_csit: bool,
    /// First-order Gauss-Markov correlation between consecutive steps.
    /// Zero gives independent block fading.
    pub gauss_markov_rho: f64,
    pub error_scale: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            perfect_csit: false,
            gauss_markov_rho: 0.0,
            error_scale: 1.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gauss_markov_rho) {
            return Err(Error::config(format!(
                "channel.gauss_markov_rho must lie in [0, 1), got {}",
                self.gauss_markov_rho
            )));
        }
        if !(self.error_scale >= 0.0) || !self.error_scale.is_finite() {
            return Err(Error::config("channel.error_scale must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn error_model(&self) -> ErrorModel {
        ErrorModel {
            scale: self.error_scale,
            perfect_csit: self.perfect_csit,
        }
    }
}

/// Time-varying channel: one realization per MDP step.
#[derive(Debug, Clone)]
pub struct ChannelProcess {
    m: usize,
    k: usize,
    p_t_linear: f64,
    config: ChannelConfig,
    previous: Option<ComplexMatrix>,
}

impl ChannelProcess {
    pub fn new(m: usize, k: usize, p_t_linear: f64, config: ChannelConfig) -> Result<Self> {
        check_dims(m, k)?;
        config.validate()?;
        if !(p_t_linear > 0.0) {
            return Err(Error::invalid("transmit power must be positive"));
        }
        Ok(Self {
            m,
            k,
            p_t_linear,
            config,
            previous: None,
        })
    }

    /// Forget the fading state; the next draw is independent of the past.
    pub fn restart(&mut self) {
        self.previous = None;
    }

    pub fn next(&mut self, rng: &mut SimRng) -> Result<ChannelRealization> {
        let innovation = sample_true_channel(rng, self.m, self.k)?;
        let rho = self.config.gauss_markov_rho;
        let true_channel = match self.previous.take() {
            Some(prev) if rho > 0.0 => prev * Complex64::from(rho)
                + innovation * Complex64::from((1.0 - rho * rho).sqrt()),
            _ => innovation,
        };
        let realization = self
            .config
            .error_model()
            .apply(&true_channel, self.p_t_linear, rng)?;
        self.previous = Some(true_channel);
        Ok(realization)
    }
}
