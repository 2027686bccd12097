//! Risk-sensitive distributional reinforcement learning for battery
//! arbitrage against single-price imbalance settlement.

pub mod agents;
pub mod env;
pub mod harness;
pub mod market;
pub mod nn;
pub mod replay;
mod scalar;

pub use scalar::Scalar;

/// Double-precision aliases used by the CLI and the harness.
pub type Agent = agents::AgentBundle<f64>;
pub type Net = nn::DenseNet<f64>;
pub type Buffer = replay::ReplayBuffer<f64>;
pub type Transition64 = replay::Transition<f64>;
