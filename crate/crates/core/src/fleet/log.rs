use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::FleetError;

/// Length of the rolling window a station inspects (s).
pub const WINDOW_S: f64 = 120.0;
/// Window resolution (s).
pub const TICK_S: f64 = 0.5;
pub const WINDOW_TICKS: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Start,
    Stop,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Stop => "stop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "start" => Some(EventKind::Start),
            "stop" => Some(EventKind::Stop),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            EventKind::Start => EventKind::Stop,
            EventKind::Stop => EventKind::Start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

impl Event {
    pub fn start(time: f64) -> Self {
        Event { time, kind: EventKind::Start }
    }

    pub fn stop(time: f64) -> Self {
        Event { time, kind: EventKind::Stop }
    }
}

/// Checks strictly increasing times and Start/Stop alternation beginning
/// with a Start.
pub fn validate_events(events: &[Event]) -> Result<(), FleetError> {
    let mut expect = EventKind::Start;
    let mut last = f64::NEG_INFINITY;
    for (i, e) in events.iter().enumerate() {
        if !e.time.is_finite() || e.time <= last {
            return Err(FleetError::BadLog(format!("event {i} at {} is not after {last}", e.time)));
        }
        if e.kind != expect {
            return Err(FleetError::BadLog(format!("event {i} is {:?}, expected {:?}", e.kind, expect)));
        }
        expect = expect.opposite();
        last = e.time;
    }
    Ok(())
}

/// Ordered Start/Stop records of one charging station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationLog {
    pub station_id: u32,
    pub bus_id: u32,
    events: Vec<Event>,
}

impl StationLog {
    pub fn new(station_id: u32, bus_id: u32) -> Self {
        StationLog { station_id, bus_id, events: Vec::new() }
    }

    pub fn from_events(station_id: u32, bus_id: u32, events: Vec<Event>) -> Result<Self, FleetError> {
        validate_events(&events)?;
        Ok(StationLog { station_id, bus_id, events })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last(&self) -> Option<&Event> {
        self.events.last()
    }

    pub fn push(&mut self, e: Event) -> Result<(), FleetError> {
        let expect = match self.events.last() {
            None => EventKind::Start,
            Some(l) => {
                if !(e.time > l.time) {
                    return Err(FleetError::BadLog(format!("event at {} is not after {}", e.time, l.time)));
                }
                l.kind.opposite()
            }
        };
        if e.kind != expect {
            return Err(FleetError::BadLog(format!("got {:?}, expected {:?}", e.kind, expect)));
        }
        if !e.time.is_finite() {
            return Err(FleetError::BadLog("non-finite event time".into()));
        }
        self.events.push(e);
        Ok(())
    }

    /// Whether the station is charging just after time `t`.
    pub fn charging_at(&self, t: f64) -> bool {
        let n = self.events.partition_point(|e| e.time <= t);
        n > 0 && self.events[n - 1].kind == EventKind::Start
    }

    pub fn window(&self, t_now: f64) -> EventSeries {
        window_events(self, t_now)
    }
}

/// 240 slots of at most one event each; slot `i` covers
/// `[t_now - 120 + 0.5 i, t_now - 120 + 0.5 (i + 1))`, and the last slot
/// also includes `t_now` itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EventSeries {
    slots: Vec<Option<EventKind>>,
}

impl EventSeries {
    pub fn empty() -> Self {
        EventSeries { slots: vec![None; WINDOW_TICKS] }
    }

    pub fn from_slots(slots: Vec<Option<EventKind>>) -> Result<Self, FleetError> {
        if slots.len() != WINDOW_TICKS {
            return Err(FleetError::BadWindow(slots.len()));
        }
        Ok(EventSeries { slots })
    }

    pub fn slots(&self) -> &[Option<EventKind>] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }

    pub fn count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }
}

/// Slot index of an event at `time` in the window ending at `t_now`.
pub fn slot_of(time: f64, t_now: f64) -> Option<usize> {
    let offset = time - (t_now - WINDOW_S);
    if offset < -1e-9 || time > t_now + 1e-9 {
        return None;
    }
    let idx = ((offset / TICK_S) + 1e-9).floor().max(0.0) as usize;
    Some(idx.min(WINDOW_TICKS - 1))
}

/// Events of any time-ordered list falling in the window ending at
/// `t_now`; later events overwrite earlier ones in the same slot.
pub fn window_from_events(events: &[Event], t_now: f64) -> EventSeries {
    let mut slots = vec![None; WINDOW_TICKS];
    let lo = events.partition_point(|e| e.time < t_now - WINDOW_S - 1e-9);
    for e in &events[lo..] {
        if e.time > t_now + 1e-9 {
            break;
        }
        if let Some(i) = slot_of(e.time, t_now) {
            slots[i] = Some(e.kind);
        }
    }
    EventSeries { slots }
}

pub fn window_events(log: &StationLog, t_now: f64) -> EventSeries {
    window_from_events(&log.events, t_now)
}

pub const LOG_CSV_HEADER: &str = "station_id,bus_id,time_s,event";

/// Writes logs as `station_id,bus_id,time_s,event` rows.
pub fn write_logs_csv<W: Write>(mut out: W, logs: &[StationLog]) -> std::io::Result<()> {
    writeln!(out, "{LOG_CSV_HEADER}")?;
    for log in logs {
        for e in &log.events {
            writeln!(out, "{},{},{:.3},{}", log.station_id, log.bus_id, e.time, e.kind.as_str())?;
        }
    }
    Ok(())
}

/// Reads logs written by [`write_logs_csv`]; rows are grouped by station in
/// order of first appearance.
pub fn read_logs_csv<R: BufRead>(input: R) -> Result<Vec<StationLog>, FleetError> {
    let mut logs: Vec<StationLog> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| FleetError::Csv(e.to_string()))?;
        if n == 0 {
            if line.trim() != LOG_CSV_HEADER {
                return Err(FleetError::Csv(format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || FleetError::Csv(format!("line {}: {line:?}", n + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        let sid: u32 = f[0].trim().parse().map_err(|_| bad())?;
        let bus: u32 = f[1].trim().parse().map_err(|_| bad())?;
        let time: f64 = f[2].trim().parse().map_err(|_| bad())?;
        let kind = EventKind::parse(f[3]).ok_or_else(bad)?;
        let pos = match logs.iter().position(|l| l.station_id == sid) {
            Some(p) => p,
            None => {
                logs.push(StationLog::new(sid, bus));
                logs.len() - 1
            }
        };
        logs[pos].push(Event { time, kind })?;
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_window() {
        let log = StationLog::new(1, 5);
        let w = window_events(&log, 300.0);
        assert_eq!(w.len(), 240);
        assert!(w.is_empty());
    }

    #[test]
    fn start_one_second_before_now() {
        let log = StationLog::from_events(1, 5, vec![Event::start(299.0)]).unwrap();
        let w = window_events(&log, 300.0);
        assert_eq!(w.slots()[238], Some(EventKind::Start));
        assert_eq!(w.count(), 1);
    }

    #[test]
    fn old_events_excluded() {
        let log = StationLog::from_events(1, 5, vec![Event::start(10.0), Event::stop(179.9)]).unwrap();
        let w = window_events(&log, 300.0);
        assert!(w.is_empty());
    }

    #[test]
    fn event_at_now_lands_in_last_slot() {
        let log = StationLog::from_events(1, 5, vec![Event::start(300.0)]).unwrap();
        assert_eq!(window_events(&log, 300.0).slots()[239], Some(EventKind::Start));
    }

    #[test]
    fn last_event_wins_in_slot() {
        let log = StationLog::from_events(1, 5, vec![Event::start(290.1), Event::stop(290.3)]).unwrap();
        let w = window_events(&log, 300.0);
        assert_eq!(w.count(), 1);
        assert_eq!(w.slots()[220], Some(EventKind::Stop));
    }

    #[test]
    fn push_rejects_bad_order() {
        let mut log = StationLog::new(1, 5);
        assert!(log.push(Event::stop(1.0)).is_err());
        log.push(Event::start(1.0)).unwrap();
        assert!(log.push(Event::stop(1.0)).is_err());
        assert!(log.push(Event::start(2.0)).is_err());
        log.push(Event::stop(2.0)).unwrap();
        assert!(log.charging_at(1.5));
        assert!(!log.charging_at(2.0));
    }

    #[test]
    fn csv_round_trip() {
        let logs = vec![
            StationLog::from_events(3, 5, vec![Event::start(1.5), Event::stop(61.25)]).unwrap(),
            StationLog::from_events(4, 8, vec![Event::start(2.0)]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_logs_csv(&mut buf, &logs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("station_id,bus_id,time_s,event\n3,5,1.500,start\n"));
        let back = read_logs_csv(&buf[..]).unwrap();
        assert_eq!(back, logs);
    }
}
