//! Oscillatory load attack schedules built from compromised charging
//! stations.

mod dynamic;
mod load;
mod schedule;

use thiserror::Error;

pub use dynamic::{DynamicFeedback, DynamicLaw, DEFAULT_HYSTERESIS_HZ, DEFAULT_LAG_FRACTION};
pub use load::AttackLoad;
pub use schedule::{
    alternating_portions, distributed_stealthy, fleet_size_for_attack, portion_levels, square_wave,
    station_pool, write_schedule_csv, AttackClass, AttackScenario, ScheduleGroup, WaveParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("station pool offers {have_mw:.3} MW, attack needs {need_mw:.3} MW")]
    InsufficientPool { need_mw: f64, have_mw: f64 },
    #[error("charge rate must be positive, got {0} kW")]
    NonPositiveRate(f64),
    #[error("invalid attack parameters: {0}")]
    InvalidParams(String),
    #[error("attack scenario file: {0}")]
    Format(String),
}
