//! Value-based and actor-critic learners over three discrete actions.

mod bundle;
mod config;
mod ddqn;
mod dist;
mod dqn;
mod dsac;
mod fqi;
mod sac;

#[cfg(test)]
pub(crate) use bundle::bundle_for_tests;
pub use bundle::{train_step, AgentBundle, Diagnostics, Mode, UpdateStats};
pub use config::{AgentConfig, Algorithm};
pub use ddqn::{ddqn_targets, ddqn_update};
pub use dist::{mean_of, project_categorical, var_of_dist, Support};
pub use dqn::{dqn_targets, dqn_update};
pub use dsac::{
    dsac_actor_gradients, dsac_actor_update, dsac_critic_targets, dsac_critic_update,
    dsac_expectation_actor_gradients, risk_adjusted_values,
};
pub use fqi::{fqi_train, FqiConfig, FqiOutcome, FqiTrainer};
pub use sac::{sac_actor_update, sac_critic_targets, sac_critic_update, temperature_update};

use thiserror::Error;

use crate::nn::NnError;
use crate::replay::ReplayError;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("{operation} needs a {expected} agent, got {got}")]
    WrongAlgorithm {
        operation: &'static str,
        expected: &'static str,
        got: Algorithm,
    },
    #[error("non-finite {0} loss")]
    NonFiniteLoss(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("at least one iteration is required")]
    ZeroIterations,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}
