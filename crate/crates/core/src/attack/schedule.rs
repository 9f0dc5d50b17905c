use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::fleet::{Event, EventKind, Station, StationProfile, LOG_CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackClass {
    SquareWave,
    DistributedStealthy,
    AlternatingPortions,
    DynamicFeedback,
}

/// Stations that switch together, sharing one event list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleGroup {
    pub station_ids: Vec<u32>,
    pub charge_rate_kw: f64,
    pub events: Vec<Event>,
}

impl ScheduleGroup {
    pub fn load_mw(&self) -> f64 {
        self.station_ids.len() as f64 * self.charge_rate_kw / 1000.0
    }

    pub fn on_at(&self, t: f64) -> bool {
        let n = self.events.partition_point(|e| e.time <= t);
        n > 0 && self.events[n - 1].kind == EventKind::Start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub class: AttackClass,
    pub target_bus: u32,
    pub start_time: f64,
    pub duration: f64,
    pub aggregate_period: f64,
    pub duty_cycle: f64,
    pub magnitude_mw: f64,
    /// Magnitude relative to the target bus's nominal load, when known.
    #[serde(default)]
    pub magnitude_fraction: Option<f64>,
    pub group_count: u32,
    pub groups: Vec<ScheduleGroup>,
}

impl AttackScenario {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    pub fn station_count(&self) -> usize {
        self.groups.iter().map(|g| g.station_ids.len()).sum()
    }

    pub fn group_of(&self, station_id: u32) -> Option<usize> {
        self.groups.iter().position(|g| g.station_ids.contains(&station_id))
    }

    /// The switching schedule of one participating station.
    pub fn station_schedule(&self, station_id: u32) -> Option<&[Event]> {
        self.group_of(station_id).map(|g| self.groups[g].events.as_slice())
    }

    pub fn participates(&self, station_id: u32) -> bool {
        self.group_of(station_id).is_some()
    }

    /// Aggregate attack load (MW) at time `t`.
    pub fn aggregate_load_mw(&self, t: f64) -> f64 {
        self.groups.iter().filter(|g| g.on_at(t)).map(|g| g.load_mw()).sum()
    }

    pub fn to_json(&self) -> Result<String, AttackError> {
        serde_json::to_string_pretty(self).map_err(|e| AttackError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, AttackError> {
        let s: AttackScenario = serde_json::from_str(text).map_err(|e| AttackError::Format(e.to_string()))?;
        for g in &s.groups {
            crate::fleet::validate_events(&g.events).map_err(|e| AttackError::Format(e.to_string()))?;
        }
        Ok(s)
    }
}

/// Number of stations at `charge_rate_kw` whose combined draw does not
/// exceed `magnitude_mw`.
pub fn fleet_size_for_attack(magnitude_mw: f64, charge_rate_kw: f64) -> Result<u64, AttackError> {
    if !(charge_rate_kw > 0.0) || !charge_rate_kw.is_finite() {
        return Err(AttackError::NonPositiveRate(charge_rate_kw));
    }
    if !(magnitude_mw >= 0.0) || !magnitude_mw.is_finite() {
        return Err(AttackError::InvalidParams(format!("magnitude {magnitude_mw} MW")));
    }
    Ok((magnitude_mw * 1000.0 / charge_rate_kw + 1e-9).floor() as u64)
}

/// `count` idle HeavyUse stations on `bus_id` with consecutive ids.
pub fn station_pool(first_id: u32, bus_id: u32, count: usize, charge_rate_kw: f64) -> Vec<Station> {
    (0..count as u32)
        .map(|i| Station::new(first_id + i, bus_id, charge_rate_kw, StationProfile::HeavyUse))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub bus: u32,
    pub period: f64,
    pub duty: f64,
    pub magnitude_mw: f64,
    pub start: f64,
    pub duration: f64,
}

impl WaveParams {
    fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::InvalidParams(m));
        if !(self.period > 0.0 && self.period.is_finite()) {
            return bad(format!("period {}", self.period));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return bad(format!("duty cycle {} outside (0, 1)", self.duty));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration {}", self.duration));
        }
        if !self.start.is_finite() {
            return bad("start time".into());
        }
        if !(self.magnitude_mw >= 0.0 && self.magnitude_mw.is_finite()) {
            return bad(format!("magnitude {}", self.magnitude_mw));
        }
        Ok(())
    }
}

/// Takes stations from the pool, in order, until the next one would push
/// the group past `mw`. Returns the ids and the common rate.
fn take_group(pool: &[Station], next: &mut usize, mw: f64, bus: u32) -> Result<(Vec<u32>, f64), AttackError> {
    let rest = &pool[*next..];
    let Some(first) = rest.first() else {
        return Err(AttackError::InsufficientPool { need_mw: mw, have_mw: 0.0 });
    };
    let rate = first.charge_rate_kw;
    let n = fleet_size_for_attack(mw, rate)? as usize;
    if rest.len() < n {
        let have = rest.iter().map(|s| s.charge_rate_kw).sum::<f64>() / 1000.0;
        return Err(AttackError::InsufficientPool { need_mw: mw, have_mw: have });
    }
    let chosen = &rest[..n];
    if let Some(s) = chosen.iter().find(|s| s.charge_rate_kw != rate || s.bus_id != bus) {
        return Err(AttackError::InvalidParams(format!(
            "station {} differs in rate or bus from the rest of its group",
            s.station_id
        )));
    }
    *next += n;
    Ok((chosen.iter().map(|s| s.station_id).collect(), rate))
}

fn pool_mw(pool: &[Station]) -> f64 {
    pool.iter().map(|s| s.charge_rate_kw).sum::<f64>() / 1000.0
}

/// Events of cycles `k = first, first + stride, ...` of a square wave.
fn cycle_events(p: &WaveParams, first: usize, stride: usize) -> Vec<Event> {
    let end = p.start + p.duration;
    let on = p.duty * p.period;
    let mut out = Vec::new();
    let mut k = first;
    loop {
        let t0 = p.start + k as f64 * p.period;
        if t0 >= end - 1e-9 {
            break;
        }
        out.push(Event::start(t0));
        out.push(Event::stop((t0 + on).min(end)));
        k += stride;
    }
    out
}

/// All selected stations switch on at every cycle edge and off after
/// `duty * period`.
pub fn square_wave(p: &WaveParams, pool: &[Station]) -> Result<AttackScenario, AttackError> {
    p.validate()?;
    if p.magnitude_mw > pool_mw(pool) + 1e-9 {
        return Err(AttackError::InsufficientPool { need_mw: p.magnitude_mw, have_mw: pool_mw(pool) });
    }
    let mut next = 0;
    let (ids, rate) = if p.magnitude_mw == 0.0 { (Vec::new(), 1.0) } else { take_group(pool, &mut next, p.magnitude_mw, p.bus)? };
    Ok(AttackScenario {
        class: AttackClass::SquareWave,
        target_bus: p.bus,
        start_time: p.start,
        duration: p.duration,
        aggregate_period: p.period,
        duty_cycle: p.duty,
        magnitude_mw: p.magnitude_mw,
        magnitude_fraction: None,
        group_count: 1,
        groups: vec![ScheduleGroup { station_ids: ids, charge_rate_kw: rate, events: cycle_events(p, 0, 1) }],
    })
}

/// `m` groups each carrying the full magnitude; group `g` handles every
/// cycle `k` with `k mod m = g`, so each station switches at `f / m` while
/// the aggregate is the synchronized square wave.
pub fn distributed_stealthy(p: &WaveParams, m: u32, pool: &[Station]) -> Result<AttackScenario, AttackError> {
    if m == 0 {
        return Err(AttackError::InvalidParams("group count must be >= 1".into()));
    }
    if m == 1 {
        return square_wave(p, pool);
    }
    p.validate()?;
    let need = p.magnitude_mw * m as f64;
    if need > pool_mw(pool) + 1e-9 {
        return Err(AttackError::InsufficientPool { need_mw: need, have_mw: pool_mw(pool) });
    }
    let mut next = 0;
    let mut groups = Vec::with_capacity(m as usize);
    for g in 0..m as usize {
        let (ids, rate) = take_group(pool, &mut next, p.magnitude_mw, p.bus)?;
        groups.push(ScheduleGroup { station_ids: ids, charge_rate_kw: rate, events: cycle_events(p, g, m as usize) });
    }
    Ok(AttackScenario {
        class: AttackClass::DistributedStealthy,
        target_bus: p.bus,
        start_time: p.start,
        duration: p.duration,
        aggregate_period: p.period,
        duty_cycle: p.duty,
        magnitude_mw: p.magnitude_mw,
        magnitude_fraction: None,
        group_count: m,
        groups,
    })
}

/// Relative size of each of the `groups` portions: samples of a raised
/// sine so the rotating one-group-on aggregate traces a sine wave.
pub fn portion_levels(groups: usize) -> Vec<f64> {
    (0..groups)
        .map(|g| 0.5 * (1.0 + (2.0 * PI * (g as f64 + 0.5) / groups as f64).sin()))
        .collect()
}

/// Rotates which portion of the compromised load is on every `step_dt`:
/// `round(1 / portion)` groups, exactly one on per step. The aggregate is a
/// sampled sine with period `groups * step_dt` peaking near the magnitude.
pub fn alternating_portions(
    bus: u32,
    portion_fraction: f64,
    step_dt: f64,
    magnitude_mw: f64,
    start: f64,
    duration: f64,
    pool: &[Station],
) -> Result<AttackScenario, AttackError> {
    if !(portion_fraction > 0.0 && portion_fraction <= 0.5) {
        return Err(AttackError::InvalidParams(format!("portion {portion_fraction} outside (0, 0.5]")));
    }
    if !(step_dt > 0.0 && step_dt.is_finite()) || !(duration > 0.0) || !(magnitude_mw >= 0.0) {
        return Err(AttackError::InvalidParams("step, duration and magnitude must be positive".into()));
    }
    let g_count = (1.0 / portion_fraction).round() as usize;
    let levels = portion_levels(g_count);
    let need: f64 = levels.iter().map(|l| l * magnitude_mw).sum();
    if need > pool_mw(pool) + 1e-9 {
        return Err(AttackError::InsufficientPool { need_mw: need, have_mw: pool_mw(pool) });
    }
    let period = g_count as f64 * step_dt;
    let end = start + duration;
    let mut next = 0;
    let mut groups = Vec::with_capacity(g_count);
    for (g, level) in levels.iter().enumerate() {
        let (ids, rate) = take_group(pool, &mut next, level * magnitude_mw, bus)?;
        let mut events = Vec::new();
        let mut k = 0usize;
        loop {
            let t0 = start + (k * g_count + g) as f64 * step_dt;
            if t0 >= end - 1e-9 {
                break;
            }
            events.push(Event::start(t0));
            events.push(Event::stop((t0 + step_dt).min(end)));
            k += 1;
        }
        groups.push(ScheduleGroup { station_ids: ids, charge_rate_kw: rate, events });
    }
    Ok(AttackScenario {
        class: AttackClass::AlternatingPortions,
        target_bus: bus,
        start_time: start,
        duration,
        aggregate_period: period,
        duty_cycle: 1.0 / g_count as f64,
        magnitude_mw,
        magnitude_fraction: None,
        group_count: g_count as u32,
        groups,
    })
}

/// Per-station schedule rows in the station log CSV layout.
pub fn write_schedule_csv<W: Write>(mut out: W, scenario: &AttackScenario) -> std::io::Result<()> {
    writeln!(out, "{LOG_CSV_HEADER}")?;
    for g in &scenario.groups {
        for id in &g.station_ids {
            for e in &g.events {
                writeln!(out, "{},{},{:.3},{}", id, scenario.target_bus, e.time, e.kind.as_str())?;
            }
        }
    }
    Ok(())
}
