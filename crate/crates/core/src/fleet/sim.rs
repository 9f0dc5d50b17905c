use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::log::{Event, EventKind, StationLog};
use super::session::{sample_arrivals, sample_duration, SessionParams};
use super::FleetError;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StationProfile {
    HeavyUse,
    LightSwitchy,
}

impl StationProfile {
    pub fn default_params(self) -> SessionParams {
        match self {
            StationProfile::HeavyUse => SessionParams::heavy_use(),
            StationProfile::LightSwitchy => SessionParams::light_switchy(),
        }
    }
}

/// Share of HeavyUse stations in a benign population.
pub const HEAVY_USE_SHARE: f64 = 0.8;

/// Draws a station profile from the 80/20 population mix.
pub fn sample_profile(rng: &mut Rng) -> StationProfile {
    if rng.random::<f64>() < HEAVY_USE_SHARE {
        StationProfile::HeavyUse
    } else {
        StationProfile::LightSwitchy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationState {
    Idle,
    Charging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub station_id: u32,
    pub bus_id: u32,
    pub state: StationState,
    pub charge_rate_kw: f64,
    pub profile: StationProfile,
}

impl Station {
    pub fn new(station_id: u32, bus_id: u32, charge_rate_kw: f64, profile: StationProfile) -> Self {
        Station { station_id, bus_id, state: StationState::Idle, charge_rate_kw, profile }
    }

    pub fn load_kw(&self) -> f64 {
        match self.state {
            StationState::Charging => self.charge_rate_kw,
            StationState::Idle => 0.0,
        }
    }
}

/// Burst behaviour of LightSwitchy stations: with this probability an
/// arrival turns into 2-3 short charge/idle cycles inside three minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstParams {
    pub probability: f64,
    pub min_cycles: u32,
    pub max_cycles: u32,
    pub charge_s: (f64, f64),
    pub idle_s: (f64, f64),
    pub span_s: f64,
}

impl Default for BurstParams {
    fn default() -> Self {
        BurstParams {
            probability: 0.25,
            min_cycles: 2,
            max_cycles: 3,
            charge_s: (26.0, 50.0),
            idle_s: (5.0, 30.0),
            span_s: 180.0,
        }
    }
}

/// Benign charging sessions `(start, stop)` for one station over
/// `[t0, t0 + horizon)`. Arrivals while the station is busy are dropped.
pub fn benign_sessions(
    rng: &mut Rng,
    profile: StationProfile,
    params: &SessionParams,
    burst: &BurstParams,
    t0: f64,
    horizon: f64,
) -> Vec<(f64, f64)> {
    let arrivals = sample_arrivals(rng, params.arrival_rate_lambda, horizon);
    let mut out = Vec::new();
    let mut free_at = f64::NEG_INFINITY;
    for a in arrivals {
        let a = t0 + a;
        if a <= free_at {
            continue;
        }
        if profile == StationProfile::LightSwitchy && rng.random::<f64>() < burst.probability {
            let cycles = rng.random_range(burst.min_cycles..=burst.max_cycles);
            let mut t = a;
            for c in 0..cycles {
                let on = rng.random_range(burst.charge_s.0..=burst.charge_s.1);
                out.push((t, t + on));
                t += on;
                if c + 1 < cycles {
                    let off = rng.random_range(burst.idle_s.0..=burst.idle_s.1);
                    if t + off - a > burst.span_s {
                        break;
                    }
                    t += off;
                }
            }
            free_at = out.last().map(|s| s.1).unwrap_or(a);
        } else {
            let d = sample_duration(rng, params);
            out.push((a, a + d));
            free_at = a + d;
        }
    }
    out
}

pub fn sessions_to_events(sessions: &[(f64, f64)]) -> Vec<Event> {
    sessions.iter().flat_map(|&(s, e)| [Event::start(s), Event::stop(e)]).collect()
}

/// Decides how long an incoming start/stop request waits before the
/// station executes it.
pub trait RequestGate {
    fn delay(&mut self, station: &Station, log: &StationLog, kind: EventKind, t: f64) -> f64;
}

/// Executes every request on arrival.
pub struct Immediate;

impl RequestGate for Immediate {
    fn delay(&mut self, _: &Station, _: &StationLog, _: EventKind, _: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    seq: u64,
    station: usize,
    kind: EventKind,
    execute: bool,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetStep {
    /// Executed events as `(station_id, event)` in execution order.
    pub events: Vec<(u32, Event)>,
    /// EV load per bus (MW), in the fleet's bus order.
    pub bus_load_mw: Vec<f64>,
}

/// Discrete-event fleet: requests arrive at stations, pass a
/// [`RequestGate`] and are executed, updating state, logs and bus load.
#[derive(Debug, Clone)]
pub struct Fleet {
    stations: Vec<Station>,
    logs: Vec<StationLog>,
    bus_ids: Vec<u32>,
    station_bus: Vec<usize>,
    queue: BinaryHeap<Reverse<Pending>>,
    seq: u64,
    clock: f64,
    bus_load_mw: Vec<f64>,
}

impl Fleet {
    pub fn new(stations: Vec<Station>, bus_ids: &[u32]) -> Result<Self, FleetError> {
        let mut station_bus = Vec::with_capacity(stations.len());
        let mut seen = std::collections::HashSet::new();
        for s in &stations {
            if !seen.insert(s.station_id) {
                return Err(FleetError::InvalidParams(format!("duplicate station {}", s.station_id)));
            }
            if !(s.charge_rate_kw > 0.0 && s.charge_rate_kw.is_finite()) {
                return Err(FleetError::InvalidParams(format!("station {} charge rate", s.station_id)));
            }
            let b = bus_ids
                .iter()
                .position(|b| *b == s.bus_id)
                .ok_or(FleetError::UnknownBus(s.bus_id))?;
            station_bus.push(b);
        }
        let logs = stations.iter().map(|s| StationLog::new(s.station_id, s.bus_id)).collect();
        let mut fleet = Fleet {
            stations,
            logs,
            bus_ids: bus_ids.to_vec(),
            station_bus,
            queue: BinaryHeap::new(),
            seq: 0,
            clock: f64::NEG_INFINITY,
            bus_load_mw: vec![0.0; bus_ids.len()],
        };
        fleet.recompute_load();
        Ok(fleet)
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn logs(&self) -> &[StationLog] {
        &self.logs
    }

    pub fn into_logs(self) -> Vec<StationLog> {
        self.logs
    }

    pub fn bus_ids(&self) -> &[u32] {
        &self.bus_ids
    }

    pub fn bus_load_mw(&self) -> &[f64] {
        &self.bus_load_mw
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Queues a request arriving at station index `station` at `time`.
    pub fn request(&mut self, station: usize, kind: EventKind, time: f64) -> Result<(), FleetError> {
        if station >= self.stations.len() {
            return Err(FleetError::InvalidParams(format!("station index {station} out of range")));
        }
        if !time.is_finite() || time < self.clock {
            return Err(FleetError::InvalidParams(format!("request at {time} precedes fleet clock {}", self.clock)));
        }
        self.push(Pending { time, seq: 0, station, kind, execute: false });
        Ok(())
    }

    pub fn schedule_sessions(&mut self, station: usize, sessions: &[(f64, f64)]) -> Result<(), FleetError> {
        for &(s, e) in sessions {
            self.request(station, EventKind::Start, s)?;
            self.request(station, EventKind::Stop, e)?;
        }
        Ok(())
    }

    fn push(&mut self, mut p: Pending) {
        p.seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(p));
    }

    fn recompute_load(&mut self) {
        self.bus_load_mw.fill(0.0);
        for (s, b) in self.stations.iter().zip(&self.station_bus) {
            self.bus_load_mw[*b] += s.load_kw() / 1000.0;
        }
    }

    fn execute(&mut self, idx: usize, kind: EventKind, time: f64) -> Option<Event> {
        let st = &mut self.stations[idx];
        let next = match (st.state, kind) {
            (StationState::Idle, EventKind::Start) => StationState::Charging,
            (StationState::Charging, EventKind::Stop) => StationState::Idle,
            _ => return None,
        };
        st.state = next;
        let log = &mut self.logs[idx];
        let mut time = time;
        if let Some(last) = log.last() {
            if time <= last.time {
                time = last.time.next_up();
            }
        }
        let e = Event { time, kind };
        log.push(e).expect("state machine keeps the log alternating");
        Some(e)
    }

    /// Processes every request due before `t + dt`.
    pub fn advance(&mut self, t: f64, dt: f64, gate: &mut dyn RequestGate) -> Result<FleetStep, FleetError> {
        if !(dt >= 0.0) || !t.is_finite() {
            return Err(FleetError::InvalidParams(format!("bad advance window t = {t}, dt = {dt}")));
        }
        if t + dt < self.clock {
            return Err(FleetError::NonMonotoneTime { t, clock: self.clock });
        }
        let until = t + dt;
        let mut events = Vec::new();
        while let Some(Reverse(p)) = self.queue.peek().copied() {
            if p.time >= until {
                break;
            }
            self.queue.pop();
            if p.execute {
                if let Some(e) = self.execute(p.station, p.kind, p.time) {
                    events.push((self.stations[p.station].station_id, e));
                }
            } else {
                let d = gate.delay(&self.stations[p.station], &self.logs[p.station], p.kind, p.time);
                if d > 0.0 {
                    self.push(Pending { time: p.time + d, seq: 0, station: p.station, kind: p.kind, execute: true });
                } else if let Some(e) = self.execute(p.station, p.kind, p.time) {
                    events.push((self.stations[p.station].station_id, e));
                }
            }
        }
        self.clock = self.clock.max(until);
        if !events.is_empty() {
            self.recompute_load();
        }
        Ok(FleetStep { events, bus_load_mw: self.bus_load_mw.clone() })
    }
}

/// Advances the fleet with every request executed on arrival.
pub fn advance_fleet(fleet: &mut Fleet, t: f64, dt: f64) -> Result<FleetStep, FleetError> {
    fleet.advance(t, dt, &mut Immediate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn fleet(n: u32) -> Fleet {
        let st = (0..n).map(|i| Station::new(i, 5 + (i % 2) * 3, 11.0, StationProfile::HeavyUse)).collect();
        Fleet::new(st, &[5, 6, 8]).unwrap()
    }

    #[test]
    fn no_arrivals_no_events() {
        let mut f = fleet(3);
        let s = advance_fleet(&mut f, 0.0, 1.0).unwrap();
        assert!(s.events.is_empty());
        assert_eq!(s.bus_load_mw, vec![0.0; 3]);
    }

    #[test]
    fn one_arrival_adds_rate() {
        let mut f = fleet(3);
        f.request(0, EventKind::Start, 0.25).unwrap();
        let s = advance_fleet(&mut f, 0.0, 0.5).unwrap();
        assert_eq!(s.events, vec![(0, Event::start(0.25))]);
        assert!((s.bus_load_mw[0] - 0.011).abs() < 1e-15);
    }

    #[test]
    fn redundant_requests_are_no_ops() {
        let mut f = fleet(1);
        f.request(0, EventKind::Stop, 0.1).unwrap();
        f.request(0, EventKind::Start, 0.2).unwrap();
        f.request(0, EventKind::Start, 0.3).unwrap();
        let s = advance_fleet(&mut f, 0.0, 1.0).unwrap();
        assert_eq!(s.events.len(), 1);
        assert_eq!(f.logs()[0].len(), 1);
    }

    #[test]
    fn unknown_bus_rejected() {
        let st = vec![Station::new(0, 99, 11.0, StationProfile::HeavyUse)];
        assert!(matches!(Fleet::new(st, &[5]), Err(FleetError::UnknownBus(99))));
    }

    #[test]
    fn time_must_not_go_back() {
        let mut f = fleet(1);
        advance_fleet(&mut f, 10.0, 1.0).unwrap();
        assert!(advance_fleet(&mut f, 5.0, 1.0).is_err());
        assert!(f.request(0, EventKind::Start, 3.0).is_err());
    }

    #[test]
    fn sessions_do_not_overlap() {
        let mut rng = rng_from_seed(9);
        let p = SessionParams::light_switchy().with_rate(400.0);
        let s = benign_sessions(&mut rng, StationProfile::LightSwitchy, &p, &BurstParams::default(), 0.0, 36_000.0);
        assert!(s.len() > 10);
        for w in s.windows(2) {
            assert!(w[0].0 < w[0].1 && w[0].1 < w[1].0);
        }
        crate::fleet::validate_events(&sessions_to_events(&s)).unwrap();
    }

    #[test]
    fn delayed_request_executes_later() {
        struct Fixed(f64);
        impl RequestGate for Fixed {
            fn delay(&mut self, _: &Station, _: &StationLog, _: EventKind, _: f64) -> f64 {
                self.0
            }
        }
        let mut f = fleet(1);
        f.request(0, EventKind::Start, 1.0).unwrap();
        let mut g = Fixed(2.0);
        assert!(f.advance(0.0, 2.0, &mut g).unwrap().events.is_empty());
        let s = f.advance(2.0, 2.0, &mut g).unwrap();
        assert_eq!(s.events, vec![(0, Event::start(3.0))]);
    }
}
