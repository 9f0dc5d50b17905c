//! Co-simulation and detection toolkit for oscillatory load attacks launched
//! from EV charging stations.
//!
//! The crate couples a reduced-order grid frequency model ([`grid`]) with a
//! discrete-event charging-station fleet ([`fleet`]) and attack schedule
//! synthesis ([`attack`]), turns the result into labeled rolling windows
//! ([`dataset`]), trains recurrent detectors from scratch ([`nn`]), tunes and
//! scores them ([`tuner`]) and runs the per-station random-delay defence in
//! closed loop ([`mitigation`]).

pub mod attack;
pub mod dataset;
pub mod fleet;
pub mod grid;
pub mod nn;
pub mod rng;
pub mod signal;
pub mod mitigation;
pub mod tuner;
