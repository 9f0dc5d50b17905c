//! Labeled rolling-window samples coupling a station's event log with its
//! bus frequency.

mod io;
mod split;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::AttackScenario;
use crate::fleet::{EventKind, EventSeries, WINDOW_S, WINDOW_TICKS};

pub use io::{read_dataset, read_dataset_file, write_dataset, write_dataset_csv, write_dataset_file, DATASET_MAGIC, DATASET_VERSION};
pub use split::split;
pub use synth::{frequency_window, synthesize_dataset, DatasetConfig};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("expected {WINDOW_TICKS} values, got {0}")]
    WrongLength(usize),
    #[error("degenerate normalization bounds [{0}, {1}]")]
    DegenerateBounds(f64, f64),
    #[error("window ending at {t_end} s lies outside the scenario horizon [0, {horizon}] s")]
    OutsideHorizon { t_end: f64, horizon: f64 },
    #[error("infeasible dataset config: {0}")]
    Infeasible(String),
    #[error("cannot stratify: {0}")]
    TooFewSamples(String),
    #[error("bad magic: not an OGDS1 dataset")]
    BadMagic,
    #[error("unsupported dataset version {0}")]
    BadVersion(u32),
    #[error("corrupt dataset: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Attack(#[from] crate::attack::AttackError),
    #[error(transparent)]
    Fleet(#[from] crate::fleet::FleetError),
}

/// How many trailing seconds of a window carry attack behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Attack5,
    Attack10,
}

impl Regime {
    pub fn tail_s(self) -> f64 {
        match self {
            Regime::Attack5 => 5.0,
            Regime::Attack10 => 10.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Regime::Attack5 => 5,
            Regime::Attack10 => 10,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            5 => Some(Regime::Attack5),
            10 => Some(Regime::Attack10),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "attack5" | "5-attack" | "5" => Some(Regime::Attack5),
            "attack10" | "10-attack" | "10" => Some(Regime::Attack10),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Attack5 => "attack5",
            Regime::Attack10 => "attack10",
        }
    }
}

/// The four normal and two attack scenario families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ScenarioClass {
    VerySlowNormalFreq = 0,
    VerySlowAbnormalFreq = 1,
    SlowNormalFreq = 2,
    FastNormalFreq = 3,
    FastSwitchingAttack = 4,
    SlowStealthyAttack = 5,
}

pub const CLASS_COUNT: usize = 6;

impl ScenarioClass {
    pub const ALL: [ScenarioClass; CLASS_COUNT] = [
        ScenarioClass::VerySlowNormalFreq,
        ScenarioClass::VerySlowAbnormalFreq,
        ScenarioClass::SlowNormalFreq,
        ScenarioClass::FastNormalFreq,
        ScenarioClass::FastSwitchingAttack,
        ScenarioClass::SlowStealthyAttack,
    ];

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn is_attack(self) -> bool {
        matches!(self, ScenarioClass::FastSwitchingAttack | ScenarioClass::SlowStealthyAttack)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioClass::VerySlowNormalFreq => "very_slow_normal_freq",
            ScenarioClass::VerySlowAbnormalFreq => "very_slow_abnormal_freq",
            ScenarioClass::SlowNormalFreq => "slow_normal_freq",
            ScenarioClass::FastNormalFreq => "fast_normal_freq",
            ScenarioClass::FastSwitchingAttack => "fast_switching_attack",
            ScenarioClass::SlowStealthyAttack => "slow_stealthy_attack",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub scenario_id: u64,
    pub station_id: u32,
    pub bus_id: u32,
    pub t_end: f64,
    pub regime: Regime,
}

/// A model-ready window: encoded events and normalized frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub events: Vec<f64>,
    pub frequency: Vec<f64>,
    pub label: u8,
    pub meta: SampleMeta,
}

impl WindowSample {
    /// Row-major `(240, 2)` matrix: `[event, frequency]` per tick.
    pub fn as_matrix(&self) -> Vec<f64> {
        let mut m = Vec::with_capacity(2 * WINDOW_TICKS);
        for (e, f) in self.events.iter().zip(&self.frequency) {
            m.push(*e);
            m.push(*f);
        }
        m
    }
}

/// A stored sample: raw frequency in Hz and event codes.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub meta: SampleMeta,
    pub label: u8,
    pub class: ScenarioClass,
    pub event_codes: Vec<u8>,
    pub freq_hz: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub min_hz: f64,
    pub max_hz: f64,
}

impl NormBounds {
    pub fn new(min_hz: f64, max_hz: f64) -> Result<Self, DatasetError> {
        if !(min_hz < max_hz) || !min_hz.is_finite() || !max_hz.is_finite() {
            return Err(DatasetError::DegenerateBounds(min_hz, max_hz));
        }
        Ok(NormBounds { min_hz, max_hz })
    }

    /// Min/max over every frequency value of the given samples.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a RawSample>) -> Result<Self, DatasetError> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in samples {
            for f in &s.freq_hz {
                lo = lo.min(*f);
                hi = hi.max(*f);
            }
        }
        NormBounds::new(lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<RawSample>,
    pub bounds: NormBounds,
    pub regime: Regime,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> [u32; CLASS_COUNT] {
        let mut c = [0u32; CLASS_COUNT];
        for s in &self.samples {
            c[s.class as usize] += 1;
        }
        c
    }

    pub fn label_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.label == 1).count();
        (self.samples.len() - pos, pos)
    }

    pub fn window(&self, i: usize) -> WindowSample {
        let s = &self.samples[i];
        WindowSample {
            events: s.event_codes.iter().map(|c| *c as f64).collect(),
            frequency: normalize_frequency(&s.freq_hz, self.bounds.min_hz, self.bounds.max_hz)
                .expect("bounds validated and stored windows have 240 ticks"),
            label: s.label,
            meta: s.meta,
        }
    }

    pub fn windows(&self) -> Vec<WindowSample> {
        (0..self.len()).map(|i| self.window(i)).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

pub fn event_code(kind: Option<EventKind>) -> u8 {
    match kind {
        None => 0,
        Some(EventKind::Stop) => 1,
        Some(EventKind::Start) => 2,
    }
}

/// Empty slot 0, Stop 1, Start 2.
pub fn encode_events(series: &EventSeries) -> Result<Vec<f64>, DatasetError> {
    encode_slots(series.slots())
}

pub fn encode_slots(slots: &[Option<EventKind>]) -> Result<Vec<f64>, DatasetError> {
    if slots.len() != WINDOW_TICKS {
        return Err(DatasetError::WrongLength(slots.len()));
    }
    Ok(slots.iter().map(|s| event_code(*s) as f64).collect())
}

/// Min-max scaling into [0, 1], clamping values outside the bounds.
pub fn normalize_frequency(raw: &[f64], min_hz: f64, max_hz: f64) -> Result<Vec<f64>, DatasetError> {
    if raw.len() != WINDOW_TICKS {
        return Err(DatasetError::WrongLength(raw.len()));
    }
    if !(min_hz < max_hz) {
        return Err(DatasetError::DegenerateBounds(min_hz, max_hz));
    }
    let span = max_hz - min_hz;
    Ok(raw.iter().map(|x| ((x - min_hz) / span).clamp(0.0, 1.0)).collect())
}

/// 1 iff `station_id` takes part in `attack`, has an attack switching
/// event in the final `K` seconds and the attack is active there.
pub fn label_window(
    attack: Option<&AttackScenario>,
    station_id: u32,
    t_end: f64,
    regime: Regime,
    horizon: f64,
) -> Result<u8, DatasetError> {
    if t_end < WINDOW_S - 1e-9 || t_end > horizon + 1e-9 {
        return Err(DatasetError::OutsideHorizon { t_end, horizon });
    }
    let Some(a) = attack else { return Ok(0) };
    if a.magnitude_mw <= 0.0 {
        return Ok(0);
    }
    let k = regime.tail_s();
    let lo = t_end - k - 1e-9;
    let hi = t_end + 1e-9;
    if a.start_time > hi || a.end_time() < lo {
        return Ok(0);
    }
    let Some(events) = a.station_schedule(station_id) else { return Ok(0) };
    let first = events.partition_point(|e| e.time < lo);
    Ok(u8::from(events.get(first).is_some_and(|e| e.time <= hi)))
}
