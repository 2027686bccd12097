//! Minute-resolution battery arbitrage MDP and a risk test bed.

mod bandit;
mod battery;
mod features;

pub use bandit::RiskyBandit;
pub use battery::{
    backup_filter, Action, BatteryConfig, BatteryEnv, EnvState, StepOutcome, CYCLE_TOLERANCE,
    SOC_TOLERANCE,
};
pub(crate) use battery::{executed_power, next_cycles, next_soc};
pub use features::{encode_features, FeatureNorm};

use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid battery config: {0}")]
    InvalidConfig(String),
    #[error("initial state of charge {0} outside [0, 1]")]
    InvalidSoc(f64),
    #[error("{0} MW is not one of -P_max, 0, +P_max")]
    InvalidAction(f64),
    #[error("action index {0} out of range")]
    InvalidActionIndex(usize),
    #[error("episode already finished")]
    EpisodeOver,
    #[error("day has {0} records, expected 1440")]
    IncompleteDay(usize),
}

/// Reward and next observation after one decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Feedback {
    pub reward: f64,
    pub next_features: Vec<f64>,
    /// No bootstrapping past this transition.
    pub terminal: bool,
    /// The episode is over (implies `terminal`).
    pub episode_end: bool,
}

/// Anything an agent can be trained against.
pub trait Environment {
    fn feature_width(&self) -> usize;
    fn observe(&self) -> Vec<f64>;
    fn step_index(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<Feedback, EnvError>;
}
