//! Rate-splitting multiple access (RSMA) downlink laboratory.
//!
//! The crate simulates a K-user MISO downlink in which the base station
//! splits each message into a common and a private part, and learns the
//! power / common-rate allocation with a Proximal Policy Optimization agent.
//! Tabular Q-learning and a history-greedy selector serve as baselines, and
//! an SDMA mode (no common stream) is available as an ablation.
//!
//! Module map:
//!
//! - [`channel`]: block-fading channel draws and imperfect BS-side estimates.
//! - [`phy`]: precoders, SINRs, rates, sum-rate and constraint checks.
//! - [`env`]: the MDP environment (observations, rewards, episodes).
//! - [`nn`]: dense network with hand-written backprop, Gaussian policy, Adam.
//! - [`ppo`]: rollouts, GAE, the clipped surrogate and minibatch updates.
//! - [`baselines`]: uniform discrete actions, Q-learning, history-greedy.
//! - [`experiment`]: configs, training runs, sweeps and CSV output.

pub mod baselines;
pub mod channel;
pub mod env;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod phy;
pub mod ppo;
pub mod rng;
pub mod toy;

pub use error::{Error, Result};
pub use rng::SimRng;
