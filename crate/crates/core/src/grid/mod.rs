//! Reduced-order multi-machine frequency model.
//!
//! Classical swing dynamics per generator with a first-order droop
//! governor, coupled through a DC (lossless, linearized) network. Load
//! buses see a frequency that is the electrical-distance weighted average
//! of the generator speeds.

mod config;
mod model;
mod noise;
mod sim;

use thiserror::Error;

pub use config::{BranchSpec, BusSpec, ExplicitGrid, GeneratorParams, GridConfig, BUILTIN_TOPOLOGIES, SLACK_DROOP};
pub use model::{build_grid, Bus, GridModel};
pub use noise::{
    random_load_perturbation, BenignNoise, NoiseConfig, NoiseDist, Perturbation, BENIGN_POWER_FACTOR,
    DEFAULT_NOISE_HOLD_S,
};
pub use sim::{
    bus_frequency, simulate, simulate_detailed, simulate_from, step, write_traces_csv, FlatProfile,
    FnProfile, FrequencyTrace, GridState, GridView, Integrator, LoadProfile, SimOptions, SimRecord,
    SumProfile, DEFAULT_DT, DEFAULT_SAMPLE_EVERY, MAX_DT,
};

/// Half-width of the normal frequency band (Hz) used when nothing else is configured.
pub const DEFAULT_NORMAL_BAND_HZ: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("unknown grid topology {0:?}")]
    UnknownTopology(String),
    #[error("invalid grid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid config: {0}")]
    Config(String),
    #[error("unknown bus {0}")]
    UnknownBus(u32),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("generator {generator} tripped at t = {time:.3} s (speed deviation {speed_dev:.4} pu)")]
    SimulationFault { time: f64, generator: u32, speed_dev: f64 },
    #[error("non-finite grid state at t = {time:.3} s")]
    NumericalFault { time: f64 },
}
