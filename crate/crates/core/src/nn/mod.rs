//! Neural-network substrate for the PPO agent.

pub mod adam;
pub mod checkpoint;
pub mod gaussian;
pub mod mlp;

pub use adam::{Adam, AdamConfig, UpdateRule};
pub use mlp::{Architecture, Block, Gradients, MlpParams, OutputGrad, PolicyOutput, Tape};
