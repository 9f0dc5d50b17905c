//! Hyperparameter search, held-out scoring and report tables.

mod metrics;
mod search;
mod tables;

pub use metrics::{early_detection_probe, evaluate, Confusion, Metrics, ProbeResult};
pub use search::{random_search, rank, refine_search, SearchResult, SearchSpace, Trial};
pub use tables::{all_tables, confusion_table, hyperparameter_table, score_table, timing_table, ResultRow};

use crate::dataset::DatasetError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum TunerError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("every trial diverged")]
    AllDiverged,
    #[error("validation samples overlap the training set")]
    Overlap,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DatasetError),
}
