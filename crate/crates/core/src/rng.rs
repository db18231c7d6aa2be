//! Deterministic random number generation.
//!
//! Every stochastic component draws from a [`SimRng`], a ChaCha8 stream
//! cipher generator. ChaCha output is specified bit-for-bit, so a given
//! `(seed, stream)` pair yields the same draws on every platform. Independent
//! consumers inside one run (channel, policy initialisation, action sampling,
//! evaluation) use distinct stream ids under the same seed.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream ids used by the experiment harness.
pub mod streams {
    pub const CHANNEL: u64 = 1;
    pub const POLICY_INIT: u64 = 2;
    pub const SAMPLING: u64 = 3;
    pub const EVALUATION: u64 = 4;
    pub const WARMUP: u64 = 5;
}

#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer on `[0, n)`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Circularly-symmetric complex Gaussian with total variance `variance`
    /// (each of the real and imaginary parts carries half of it).
    pub fn complex_normal(&mut self, variance: f64) -> Complex64 {
        let s = (variance / 2.0).sqrt();
        let re = self.standard_normal();
        let im = self.standard_normal();
        Complex64::new(s * re, s * im)
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
