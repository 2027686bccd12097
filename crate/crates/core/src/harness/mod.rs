//! Training loop, evaluation metrics, exports and the perfect-foresight
//! dynamic-programming benchmark.

mod checkpoint;
mod compare;
mod config;
mod eval;
mod heatmap;
mod log;
mod oracle;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use compare::{compare_algorithms, compare_checkpoints, Comparison, ComparisonRow};
pub use config::{prepare_data, DataConfig, Prepared, RunConfig, RunSection};
pub use eval::{
    empirical_var, evaluate, evaluate_policy, ActionScript, DayReport, EvalReport, GreedyPolicy,
    Histogram, IdlePolicy, Policy, HOURLY_BIN_EUR,
};
pub use heatmap::{heatmap, linspace, HeatmapGrid, HeatmapMeta, HeatmapSpec};
pub use log::NdjsonLog;
pub use oracle::{dp_oracle, OracleSolution, DEFAULT_SOC_RESOLUTION};
pub use train::{run_episode, train, train_on, CurvePoint, EpisodeSummary, TrainOutcome};

use std::path::PathBuf;

use thiserror::Error;

use crate::agents::AgentError;
use crate::env::EnvError;
use crate::market::DataError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("network expects {network} input features, environment produces {env}")]
    TopologyMismatch { network: usize, env: usize },
    #[error(
        "training diverged in episode {episode}: {source}; last good state saved to {checkpoint:?}"
    )]
    Diverged {
        episode: usize,
        source: AgentError,
        checkpoint: Option<PathBuf>,
    },
    #[error("SoC grid of {resolution} points is coarser than one step's SoC change; use at least {minimum}")]
    TooCoarse { resolution: usize, minimum: usize },
    #[error("{0}")]
    Precondition(String),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
