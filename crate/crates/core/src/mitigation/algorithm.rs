use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::MitigationError;
use crate::dataset::{encode_events, frequency_window, normalize_frequency, NormBounds, Regime, SampleMeta, WindowSample};
use crate::fleet::{window_from_events, Event, EventKind, Station, StationLog};
use crate::nn::{Model, DEFAULT_THRESHOLD};
use crate::rng::Rng;

/// Upper bound of the random request delay (s).
pub const MAX_DELAY_S: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn from_probability(p: f64, threshold: f64) -> Self {
        if p >= threshold {
            Label::Abnormal
        } else {
            Label::Normal
        }
    }

    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    M1,
    M2,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub time: f64,
    pub station_id: u32,
    pub bus_id: u32,
    pub label_source: LabelSource,
}

/// Per-station detection state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MitigationState {
    pub active: bool,
    pub last_decisions: Option<(Label, Label)>,
    pub report_log: Vec<OperatorReport>,
    pub activations: u64,
    /// Evaluations skipped for lack of a full window.
    pub cold_starts: u64,
}

impl MitigationState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one pair of model decisions. Either model abnormal turns
    /// mitigation on; only both normal turn it off.
    pub fn observe(&mut self, t: f64, station_id: u32, bus_id: u32, m1: Label, m2: Label) -> bool {
        let was = self.active;
        self.active = m1.is_abnormal() || m2.is_abnormal();
        self.last_decisions = Some((m1, m2));
        if self.active {
            if !was {
                self.activations += 1;
            }
            let label_source = match (m1.is_abnormal(), m2.is_abnormal()) {
                (true, true) => LabelSource::Both,
                (true, false) => LabelSource::M1,
                _ => LabelSource::M2,
            };
            self.report_log.push(OperatorReport { time: t, station_id, bus_id, label_source });
        }
        self.active
    }
}

/// Zero while inactive, uniform on (0, 4] s while active.
pub fn delay_for_request(rng: &mut Rng, state: &MitigationState) -> f64 {
    if !state.active {
        return 0.0;
    }
    // random() is in [0, 1), so the draw lands in (0, MAX].
    MAX_DELAY_S * (1.0 - rng.random::<f64>())
}

/// Frequency samples of one bus as seen by a station, oldest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyHistory {
    pub times: Vec<f64>,
    pub hz: Vec<f64>,
}

impl FrequencyHistory {
    pub fn push(&mut self, t: f64, hz: f64) {
        self.times.push(t);
        self.hz.push(hz);
    }

    /// Number of samples at or before `t`.
    pub fn count_until(&self, t: f64) -> usize {
        self.times.partition_point(|s| *s <= t + 1e-9)
    }
}

/// The two detectors of a station with the bounds each was trained on.
pub struct ModelPair {
    pub m1: Model,
    pub m2: Model,
    pub bounds1: NormBounds,
    pub bounds2: NormBounds,
    pub threshold: f64,
    memo: HashMap<(u8, Vec<u8>, usize, usize), Label>,
    evaluations: u64,
}

impl ModelPair {
    pub fn new(m1: Model, bounds1: NormBounds, m2: Model, bounds2: NormBounds) -> Self {
        ModelPair { m1, m2, bounds1, bounds2, threshold: DEFAULT_THRESHOLD, memo: HashMap::new(), evaluations: 0 }
    }

    /// Forward passes actually run (memo misses).
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Memoized on the exact window contents: stations with identical logs
    /// on the same bus at the same tick share a prediction.
    fn label(&mut self, which: u8, codes: &[u8], raw: &[f64], bus: usize, n: usize) -> Result<Label, MitigationError> {
        let key = (which, codes.to_vec(), bus, n);
        if let Some(l) = self.memo.get(&key) {
            return Ok(*l);
        }
        let (model, bounds) = if which == 1 { (&mut self.m1, self.bounds1) } else { (&mut self.m2, self.bounds2) };
        let w = WindowSample {
            events: codes.iter().map(|c| *c as f64).collect(),
            frequency: normalize_frequency(raw, bounds.min_hz, bounds.max_hz)?,
            label: 0,
            meta: SampleMeta { scenario_id: 0, station_id: 0, bus_id: 0, t_end: 0.0, regime: Regime::Attack5 },
        };
        let (p, _) = model.predict(&w)?;
        self.evaluations += 1;
        let l = Label::from_probability(p, self.threshold);
        self.memo.insert(key, l);
        Ok(l)
    }
}

/// Evaluates both detectors on the window ending at `t`, with the incoming
/// `request` (if any) in its final slot, and updates `state`. A window
/// without 120 s of frequency history counts as normal.
#[allow(clippy::too_many_arguments)]
pub fn detect_on_event(
    state: &mut MitigationState,
    pair: &mut ModelPair,
    station: &Station,
    log: &StationLog,
    request: Option<EventKind>,
    freq: &FrequencyHistory,
    bus_index: usize,
    t: f64,
) -> Result<bool, MitigationError> {
    let Some(raw) = frequency_window(&freq.times, &freq.hz, t) else {
        state.cold_starts += 1;
        return Ok(state.observe(t, station.station_id, station.bus_id, Label::Normal, Label::Normal));
    };
    let n = freq.count_until(t);
    let series = match request {
        Some(kind) if log.last().is_none_or(|e| e.time < t) => {
            let lo = log.events().partition_point(|e| e.time < t - crate::fleet::WINDOW_S - 1.0);
            let mut evs: Vec<Event> = log.events()[lo..].to_vec();
            evs.push(Event { time: t, kind });
            window_from_events(&evs, t)
        }
        _ => window_from_events(log.events(), t),
    };
    let codes: Vec<u8> = encode_events(&series)?.iter().map(|c| *c as u8).collect();
    let l1 = pair.label(1, &codes, &raw, bus_index, n)?;
    let l2 = pair.label(2, &codes, &raw, bus_index, n)?;
    Ok(state.observe(t, station.station_id, station.bus_id, l1, l2))
}
