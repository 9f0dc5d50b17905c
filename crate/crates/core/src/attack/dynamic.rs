use serde::{Deserialize, Serialize};

use super::{AttackClass, AttackError, AttackScenario, ScheduleGroup};
use crate::fleet::{Event, Station};
use crate::grid::{GridError, GridModel, GridView, LoadProfile};

pub const DEFAULT_HYSTERESIS_HZ: f64 = 0.005;
pub const DEFAULT_LAG_FRACTION: f64 = 0.4;

/// Bang-bang relay driven by the target bus frequency.
///
/// The attacker tracks frequency extrema with a hysteresis band. After a
/// trough the load is dropped, after a crest it is reconnected, each
/// `lag_fraction` of the last half swing past the extremum itself. The load
/// is thus on roughly while frequency sits below the centre of its swing,
/// which pumps energy into the oscillation whatever the operating offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicLaw {
    pub hysteresis_hz: f64,
    pub lag_fraction: f64,
}

impl Default for DynamicLaw {
    fn default() -> Self {
        DynamicLaw { hysteresis_hz: DEFAULT_HYSTERESIS_HZ, lag_fraction: DEFAULT_LAG_FRACTION }
    }
}

/// Closed-loop attacker: decides each step whether the compromised load
/// is on and logs its decisions for post-hoc schedules.
#[derive(Debug, Clone)]
pub struct DynamicFeedback {
    law: DynamicLaw,
    bus_id: u32,
    bus_index: usize,
    station_ids: Vec<u32>,
    charge_rate_kw: f64,
    magnitude_mw: f64,
    start: f64,
    duration: f64,
    started: bool,
    on: bool,
    falling: bool,
    extremum: f64,
    extremum_time: f64,
    last_turn: Option<f64>,
    half_swing: f64,
    pending: Option<(f64, bool)>,
    events: Vec<Event>,
    toggles: usize,
}

impl DynamicFeedback {
    pub fn new(
        model: &GridModel,
        bus_id: u32,
        magnitude_mw: f64,
        start: f64,
        duration: f64,
        pool: &[Station],
        law: DynamicLaw,
    ) -> Result<Self, AttackError> {
        let bus_index = model
            .bus_index(bus_id)
            .map_err(|e: GridError| AttackError::InvalidParams(e.to_string()))?;
        if !(duration > 0.0) || !start.is_finite() {
            return Err(AttackError::InvalidParams("start and duration".into()));
        }
        if !(law.hysteresis_hz >= 0.0) || !(0.0..1.0).contains(&law.lag_fraction) {
            return Err(AttackError::InvalidParams("hysteresis >= 0 and lag fraction in [0, 1)".into()));
        }
        let (station_ids, rate) = if magnitude_mw == 0.0 {
            (Vec::new(), pool.first().map(|s| s.charge_rate_kw).unwrap_or(1.0))
        } else {
            let rate = pool.first().map(|s| s.charge_rate_kw).unwrap_or(0.0);
            let n = super::fleet_size_for_attack(magnitude_mw, rate)? as usize;
            if pool.len() < n {
                return Err(AttackError::InsufficientPool {
                    need_mw: magnitude_mw,
                    have_mw: pool.iter().map(|s| s.charge_rate_kw).sum::<f64>() / 1000.0,
                });
            }
            (pool[..n].iter().map(|s| s.station_id).collect(), rate)
        };
        Ok(DynamicFeedback {
            law,
            bus_id,
            bus_index,
            station_ids,
            charge_rate_kw: rate,
            magnitude_mw,
            start,
            duration,
            started: false,
            on: false,
            falling: true,
            extremum: 0.0,
            extremum_time: 0.0,
            last_turn: None,
            half_swing: 0.0,
            pending: None,
            events: Vec::new(),
            toggles: 0,
        })
    }

    fn group_mw(&self) -> f64 {
        self.station_ids.len() as f64 * self.charge_rate_kw / 1000.0
    }

    fn set(&mut self, t: f64, on: bool) {
        if on != self.on {
            self.on = on;
            self.toggles += 1;
            self.events.push(if on { Event::start(t) } else { Event::stop(t) });
        }
    }

    /// Feeds one frequency reading at time `t`; returns whether the load is on.
    pub fn decide(&mut self, t: f64, freq_hz: f64) -> bool {
        if t < self.start - 1e-9 {
            return false;
        }
        if t >= self.start + self.duration - 1e-9 {
            self.pending = None;
            self.set(t, false);
            return false;
        }
        if !self.started {
            self.started = true;
            self.extremum = freq_hz;
            self.extremum_time = t;
            self.falling = true;
            self.set(t, true);
            return true;
        }
        let h = self.law.hysteresis_hz;
        let mut turned = false;
        if (self.falling && freq_hz < self.extremum) || (!self.falling && freq_hz > self.extremum) {
            self.extremum = freq_hz;
            self.extremum_time = t;
        }
        if (self.falling && freq_hz > self.extremum + h) || (!self.falling && freq_hz < self.extremum - h) {
            self.falling = !self.falling;
            turned = true;
        }
        if turned {
            let at = self.extremum_time;
            if let Some(prev) = self.last_turn {
                self.half_swing = at - prev;
            }
            self.last_turn = Some(at);
            self.extremum = freq_hz;
            self.extremum_time = t;
            self.pending = Some((at + self.law.lag_fraction * self.half_swing, self.falling));
        }
        if let Some((due, want)) = self.pending {
            if t >= due - 1e-9 {
                self.pending = None;
                self.set(t, want);
            }
        }
        self.on
    }

    pub fn is_on(&self) -> bool {
        self.on
    }

    /// Number of on/off switches so far.
    pub fn toggles(&self) -> usize {
        self.toggles
    }

    pub fn current_mw(&self) -> f64 {
        if self.on {
            self.group_mw()
        } else {
            0.0
        }
    }

    /// The decisions taken so far as a one-group schedule.
    pub fn to_scenario(&self) -> AttackScenario {
        let mut events = self.events.clone();
        if self.on {
            events.push(Event::stop(self.start + self.duration));
        }
        let period = if self.half_swing > 0.0 { 2.0 * self.half_swing } else { 0.0 };
        AttackScenario {
            class: AttackClass::DynamicFeedback,
            target_bus: self.bus_id,
            start_time: self.start,
            duration: self.duration,
            aggregate_period: period,
            duty_cycle: 0.5,
            magnitude_mw: self.magnitude_mw,
            magnitude_fraction: None,
            group_count: 1,
            groups: vec![ScheduleGroup {
                station_ids: self.station_ids.clone(),
                charge_rate_kw: self.charge_rate_kw,
                events,
            }],
        }
    }
}

impl LoadProfile for DynamicFeedback {
    fn load_mw(&mut self, t: f64, grid: &GridView<'_>, out: &mut [f64]) {
        let f = grid.bus_frequency_at(self.bus_index);
        self.decide(t, f);
        out.fill(0.0);
        out[self.bus_index] = self.current_mw();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::station_pool;
    use crate::grid::{build_grid, simulate, FlatProfile, GridConfig, SumProfile};

    fn model() -> GridModel {
        build_grid(&GridConfig::builtin("wscc9")).unwrap()
    }

    #[test]
    fn constant_feed_never_toggles_after_start() {
        let m = model();
        let mut a = DynamicFeedback::new(&m, 5, 10.0, 1.0, 100.0, &station_pool(0, 5, 2000, 11.0), DynamicLaw::default())
            .unwrap();
        for k in 0..5000 {
            a.decide(k as f64 * 0.01, 60.0);
        }
        assert_eq!(a.toggles(), 1);
        assert!(a.is_on());
    }

    #[test]
    fn zero_magnitude_has_no_effect() {
        let m = model();
        let mut a = DynamicFeedback::new(&m, 5, 0.0, 1.0, 30.0, &[], DynamicLaw::default()).unwrap();
        let mut flat = FlatProfile;
        let mut sum = SumProfile::new(vec![&mut a, &mut flat]);
        let tr = simulate(&m, &mut sum, 30.0, 0.01, 0.5).unwrap();
        assert!(tr.iter().all(|t| t.samples.iter().all(|f| *f == 60.0)));
    }

    #[test]
    fn schedule_alternates() {
        let m = model();
        let mut a = DynamicFeedback::new(&m, 5, 20.0, 2.0, 20.0, &station_pool(0, 5, 2000, 11.0), DynamicLaw::default())
            .unwrap();
        simulate(&m, &mut a, 30.0, 0.01, 0.5).unwrap();
        assert!(a.toggles() > 10);
        let s = a.to_scenario();
        crate::fleet::validate_events(&s.groups[0].events).unwrap();
        assert!(!a.is_on());
    }
}
