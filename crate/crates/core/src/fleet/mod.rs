//! Discrete-event charging-station fleet: benign arrivals and sessions,
//! per-station event logs, rolling event windows and per-bus EV load.

mod log;
mod session;
mod sim;

use thiserror::Error;

pub use log::{
    read_logs_csv, slot_of, validate_events, window_events, window_from_events, write_logs_csv, Event,
    EventKind, EventSeries, StationLog, LOG_CSV_HEADER, TICK_S, WINDOW_S, WINDOW_TICKS,
};
pub use session::{sample_arrivals, sample_arrivals_tod, sample_duration, SessionParams, DEFAULT_HOURLY_PROFILE};
pub use sim::{
    advance_fleet, benign_sessions, sample_profile, sessions_to_events, BurstParams, Fleet, FleetStep,
    Immediate, RequestGate, Station, StationProfile, StationState, HEAVY_USE_SHARE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FleetError {
    #[error("invalid fleet parameters: {0}")]
    InvalidParams(String),
    #[error("station log violates ordering: {0}")]
    BadLog(String),
    #[error("event window must have 240 slots, got {0}")]
    BadWindow(usize),
    #[error("station attached to unknown bus {0}")]
    UnknownBus(u32),
    #[error("fleet advanced to {t} before its clock {clock}")]
    NonMonotoneTime { t: f64, clock: f64 },
    #[error("event csv: {0}")]
    Csv(String),
}
