//! Two-model detection with per-station random request delays, and the
//! closed-loop grid demonstration of the defence.

mod algorithm;
mod closed_loop;

pub use algorithm::{
    delay_for_request, detect_on_event, FrequencyHistory, Label, LabelSource, MitigationState, ModelPair,
    OperatorReport, MAX_DELAY_S,
};
pub use closed_loop::{
    run_closed_loop, write_trace_csv, Detection, HistogramBin, MitigationConfig, MitigationReport, MitigationSummary,
};

use crate::attack::AttackError;
use crate::dataset::DatasetError;
use crate::fleet::FleetError;
use crate::grid::GridError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum MitigationError {
    #[error("invalid mitigation config: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DatasetError),
}
