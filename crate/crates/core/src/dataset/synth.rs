use rand::seq::IndexedRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    event_code, label_window, DatasetError, Dataset, NormBounds, RawSample, Regime, SampleMeta, ScenarioClass,
};
use crate::attack::{
    alternating_portions, distributed_stealthy, fleet_size_for_attack, square_wave, station_pool, AttackLoad,
    DynamicFeedback, DynamicLaw, WaveParams,
};
use crate::fleet::{
    benign_sessions, sample_profile, sessions_to_events, window_from_events, BurstParams, Event, SessionParams,
    StationProfile, TICK_S, WINDOW_S, WINDOW_TICKS,
};
use crate::grid::{
    build_grid, simulate_detailed, BenignNoise, FnProfile, GridConfig, GridModel, NoiseConfig, NoiseDist,
    SimOptions, SumProfile, DEFAULT_DT,
};
use crate::rng::{stream_rng, Rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub normal: usize,
    pub attack: usize,
    pub grid: String,
    pub regime: Regime,
    /// Simulated seconds per scenario; every window ends at or before it.
    pub horizon_s: f64,
    pub dt: f64,
    pub charge_rate_kw: f64,
    pub noise_cap: (f64, f64),
    pub magnitude_fraction: (f64, f64),
    pub period_s: (f64, f64),
    pub duty_cycles: Vec<f64>,
    pub stealthy_groups: Vec<u32>,
    /// Seconds of attack visible at the end of attack windows. `None` rolls
    /// the window over the attack on a 1 s grid: each attack window shows
    /// 1, 2, ... or K seconds of attack, K being the regime's tail.
    pub attack_tail_s: Option<f64>,
    /// Abnormal-frequency normal windows see their disturbance begin at
    /// least this long before the regime's tail.
    pub abnormal_onset_margin_s: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            normal: 1000,
            attack: 1000,
            grid: "wscc9".into(),
            regime: Regime::Attack5,
            horizon_s: 140.0,
            dt: DEFAULT_DT,
            charge_rate_kw: 11.0,
            noise_cap: (0.005, 0.02),
            magnitude_fraction: (0.10, 0.30),
            period_s: (1.0, 2.0),
            duty_cycles: vec![0.35, 0.5, 0.6],
            stealthy_groups: vec![2, 3, 4],
            attack_tail_s: None,
            abnormal_onset_margin_s: 10.0,
        }
    }
}

impl DatasetConfig {
    fn draw_tail(&self, rng: &mut Rng) -> f64 {
        match self.attack_tail_s {
            Some(t) => t,
            None => rng.random_range(1..=self.regime.tail_s().round() as u32) as f64,
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Infeasible(m));
        if self.normal + self.attack == 0 {
            return bad("no scenarios requested".into());
        }
        if self.horizon_s < WINDOW_S + 20.0 {
            return bad(format!("horizon {} s leaves no room for a 120 s window", self.horizon_s));
        }
        let tail = self.attack_tail_s.unwrap_or(self.regime.tail_s());
        if !(tail > 0.0 && tail <= self.regime.tail_s()) {
            return bad(format!("attack tail {tail} s must lie in (0, {}]", self.regime.tail_s()));
        }
        let (lo, hi) = self.magnitude_fraction;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad("magnitude fraction range".into());
        }
        if !(self.period_s.0 > 0.0 && self.period_s.0 <= self.period_s.1) {
            return bad("period range".into());
        }
        if self.duty_cycles.is_empty() || self.duty_cycles.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return bad("duty cycles must lie in (0, 1)".into());
        }
        if self.stealthy_groups.is_empty() || self.stealthy_groups.iter().any(|m| *m < 2) {
            return bad("stealthy attacks need group counts >= 2".into());
        }
        if !(0.0 <= self.noise_cap.0 && self.noise_cap.0 <= self.noise_cap.1 && self.noise_cap.1 <= 0.1) {
            return bad("noise cap range must lie in [0, 0.1]".into());
        }
        if !(self.charge_rate_kw > 0.0) {
            return bad("charge rate must be positive".into());
        }
        let earliest = self.horizon_s - 110.0;
        let latest = self.horizon_s - self.regime.tail_s() - self.abnormal_onset_margin_s;
        if latest < earliest {
            return bad("abnormal onset margin leaves no room inside the window".into());
        }
        Ok(())
    }

    /// Class of scenario `id`: normal ids come first and cycle through the
    /// four normal families, attack ids alternate fast and stealthy.
    pub fn class_of(&self, id: usize) -> ScenarioClass {
        if id < self.normal {
            ScenarioClass::ALL[id % 4]
        } else {
            ScenarioClass::ALL[4 + (id - self.normal) % 2]
        }
    }
}

/// The `WINDOW_TICKS` most recent samples at or before `t_end`, given
/// samples taken at `times`. `None` when the history is too short.
pub fn frequency_window(times: &[f64], hz: &[f64], t_end: f64) -> Option<Vec<f64>> {
    let n = times.partition_point(|t| *t <= t_end + 1e-9);
    if n < WINDOW_TICKS {
        return None;
    }
    Some(hz[n - WINDOW_TICKS..n].to_vec())
}

struct Scenario {
    class: ScenarioClass,
    bus_id: u32,
    station_id: u32,
    station_events: Vec<Event>,
    t_end: f64,
    label: u8,
    freq: Vec<f64>,
}

fn noise_for(model: &GridModel, cfg: &DatasetConfig, rng: &mut Rng) -> Result<BenignNoise, DatasetError> {
    let cap = rng.random_range(cfg.noise_cap.0..=cfg.noise_cap.1);
    let dist = if rng.random::<bool>() { NoiseDist::Gaussian } else { NoiseDist::Uniform };
    let seed: u64 = rng.random();
    Ok(BenignNoise::new(
        model,
        NoiseConfig { cap_fraction: cap, dist, ..NoiseConfig::default() },
        crate::rng::rng_from_seed(seed),
    )?)
}

fn sim_opts(cfg: &DatasetConfig) -> SimOptions {
    SimOptions { horizon: cfg.horizon_s, dt: cfg.dt, sample_every: TICK_S }
}

/// Short sessions and frequent arrivals of a busy, benign station.
fn fast_params(rng: &mut Rng, rate_kw: f64) -> SessionParams {
    SessionParams {
        arrival_rate_lambda: rng.random_range(6.0..=12.0) * 60.0,
        hourly_profile: None,
        duration_mean: 4.0,
        duration_std: 2.0,
        duration_min: 1.0,
        duration_max: 12.0,
        charge_rate_kw: rate_kw,
    }
}

/// A benign station history shifted so one of its own requests lands
/// exactly at `t_end`; later events are dropped.
fn anchored_history(
    rng: &mut Rng,
    profile: StationProfile,
    params: &SessionParams,
    t_end: f64,
) -> Vec<Event> {
    let lambda = params.arrival_rate_lambda.max(1e-3);
    let span = 3600.0 * (10.0 / lambda).max(2.0);
    for _ in 0..50 {
        let sessions = benign_sessions(rng, profile, params, &BurstParams::default(), 0.0, span);
        let events = sessions_to_events(&sessions);
        let eligible: Vec<usize> =
            events.iter().enumerate().filter(|(_, e)| e.time >= WINDOW_S + 30.0).map(|(i, _)| i).collect();
        if let Some(&pick) = eligible.choose(rng) {
            let shift = t_end - events[pick].time;
            return events[..=pick]
                .iter()
                .map(|e| Event { time: e.time + shift, kind: e.kind })
                .collect();
        }
    }
    vec![Event::start(t_end)]
}

/// Benign sessions that finish before `before`.
fn history_before(rng: &mut Rng, profile: StationProfile, params: &SessionParams, before: f64) -> Vec<Event> {
    let span = 3.0 * WINDOW_S;
    let sessions = benign_sessions(rng, profile, params, &BurstParams::default(), before - span, span);
    let kept: Vec<(f64, f64)> = sessions.into_iter().filter(|s| s.1 < before).collect();
    sessions_to_events(&kept)
}

fn pick_bus(model: &GridModel, rng: &mut Rng) -> (u32, f64) {
    let b = &model.buses[rng.random_range(0..model.buses.len())];
    (b.bus_id, b.nominal_load_mw)
}

/// Rounds an attack magnitude down to what whole stations can draw.
fn whole_stations(mw: f64, rate_kw: f64) -> Result<f64, DatasetError> {
    Ok(fleet_size_for_attack(mw, rate_kw)? as f64 * rate_kw / 1000.0)
}

fn wave(cfg: &DatasetConfig, rng: &mut Rng, bus: u32, mw: f64, start: f64, duration: f64) -> WaveParams {
    WaveParams {
        bus,
        period: rng.random_range(cfg.period_s.0..=cfg.period_s.1),
        duty: *cfg.duty_cycles.choose(rng).expect("validated non-empty"),
        magnitude_mw: mw,
        start,
        duration,
    }
}

fn bus_trace(model: &GridModel, rec: &crate::grid::SimRecord, bus_id: u32, t_end: f64) -> Result<Vec<f64>, DatasetError> {
    let b = model.bus_index(bus_id)?;
    frequency_window(&rec.times, &rec.bus_freq[b], t_end)
        .ok_or(DatasetError::OutsideHorizon { t_end, horizon: rec.times.last().copied().unwrap_or(0.0) })
}

fn normal_scenario(
    model: &GridModel,
    cfg: &DatasetConfig,
    class: ScenarioClass,
    rng: &mut Rng,
) -> Result<Scenario, DatasetError> {
    let t_end = cfg.horizon_s;
    let (bus_id, _) = pick_bus(model, rng);
    let profile = sample_profile(rng);
    let base = profile.default_params();
    let params = match class {
        ScenarioClass::VerySlowNormalFreq | ScenarioClass::VerySlowAbnormalFreq => {
            base.with_rate(rng.random_range(0.5..=5.5))
        }
        ScenarioClass::SlowNormalFreq => base.with_rate(rng.random_range(6.0..=60.0)),
        _ => fast_params(rng, cfg.charge_rate_kw),
    };
    let station_events = anchored_history(rng, profile, &params, t_end);
    let mut noise = noise_for(model, cfg, rng)?;

    let rec = if class == ScenarioClass::VerySlowAbnormalFreq {
        let onset = rng.random_range(
            cfg.horizon_s - 110.0..=cfg.horizon_s - cfg.regime.tail_s() - cfg.abnormal_onset_margin_s,
        );
        let (dist_bus, dist_load) = pick_bus(model, rng);
        let frac = rng.random_range(cfg.magnitude_fraction.0..=cfg.magnitude_fraction.1);
        let mw = whole_stations(frac * dist_load, cfg.charge_rate_kw)?;
        if rng.random::<f64>() < 0.7 {
            // An attack elsewhere in the fleet; this station is not part of it.
            let p = wave(cfg, rng, dist_bus, mw, onset, t_end - onset + 1.0);
            let attack = if rng.random::<bool>() {
                let m = *cfg.stealthy_groups.choose(rng).expect("validated");
                let n = fleet_size_for_attack(mw, cfg.charge_rate_kw)? as usize * m as usize;
                distributed_stealthy(&p, m, &station_pool(1_000_000, dist_bus, n, cfg.charge_rate_kw))?
            } else {
                let n = fleet_size_for_attack(mw, cfg.charge_rate_kw)? as usize;
                square_wave(&p, &station_pool(1_000_000, dist_bus, n, cfg.charge_rate_kw))?
            };
            let mut load = AttackLoad::new(&attack, model)?;
            let mut sum = SumProfile::new(vec![&mut noise, &mut load]);
            simulate_detailed(model, &mut sum, sim_opts(cfg))?
        } else {
            // A benign step change of load on some bus.
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let idx = model.bus_index(dist_bus)?;
            let mut step = FnProfile(move |t: f64, out: &mut [f64]| {
                out.fill(0.0);
                if t >= onset {
                    out[idx] = sign * mw;
                }
            });
            let mut sum = SumProfile::new(vec![&mut noise, &mut step]);
            simulate_detailed(model, &mut sum, sim_opts(cfg))?
        }
    } else {
        simulate_detailed(model, &mut noise, sim_opts(cfg))?
    };
    let freq = bus_trace(model, &rec, bus_id, t_end)?;
    Ok(Scenario { class, bus_id, station_id: 1, station_events, t_end, label: 0, freq })
}

fn attack_scenario(
    model: &GridModel,
    cfg: &DatasetConfig,
    class: ScenarioClass,
    rng: &mut Rng,
) -> Result<Scenario, DatasetError> {
    let tail = cfg.draw_tail(rng);
    let t_end = cfg.horizon_s;
    let start = t_end - tail;
    let (bus_id, load) = pick_bus(model, rng);
    let frac = rng.random_range(cfg.magnitude_fraction.0..=cfg.magnitude_fraction.1);
    let mw = whole_stations(frac * load, cfg.charge_rate_kw)?;
    let n = fleet_size_for_attack(mw, cfg.charge_rate_kw)? as usize;
    let first_id = 1000;
    let mut noise = noise_for(model, cfg, rng)?;
    // Attack schedules run a little past the window end.
    let duration = tail + 1.0;

    let (mut attack, rec) = if class == ScenarioClass::SlowStealthyAttack {
        let m = *cfg.stealthy_groups.choose(rng).expect("validated");
        let p = wave(cfg, rng, bus_id, mw, start, duration);
        let a = distributed_stealthy(&p, m, &station_pool(first_id, bus_id, n * m as usize, cfg.charge_rate_kw))?;
        let mut l = AttackLoad::new(&a, model)?;
        let mut sum = SumProfile::new(vec![&mut noise, &mut l]);
        let rec = simulate_detailed(model, &mut sum, sim_opts(cfg))?;
        (a, rec)
    } else {
        match rng.random_range(0..3u32) {
            0 => {
                let p = wave(cfg, rng, bus_id, mw, start, duration);
                let a = square_wave(&p, &station_pool(first_id, bus_id, n, cfg.charge_rate_kw))?;
                let mut l = AttackLoad::new(&a, model)?;
                let mut sum = SumProfile::new(vec![&mut noise, &mut l]);
                let rec = simulate_detailed(model, &mut sum, sim_opts(cfg))?;
                (a, rec)
            }
            1 => {
                let portion = *[0.125, 0.25].choose(rng).expect("non-empty");
                let groups = (1.0 / portion) as usize;
                let period = rng.random_range(cfg.period_s.0..=cfg.period_s.1);
                let pool = station_pool(first_id, bus_id, n * groups, cfg.charge_rate_kw);
                let a = alternating_portions(bus_id, portion, period / groups as f64, mw, start, duration, &pool)?;
                let mut l = AttackLoad::new(&a, model)?;
                let mut sum = SumProfile::new(vec![&mut noise, &mut l]);
                let rec = simulate_detailed(model, &mut sum, sim_opts(cfg))?;
                (a, rec)
            }
            _ => {
                let pool = station_pool(first_id, bus_id, n, cfg.charge_rate_kw);
                let mut d = DynamicFeedback::new(model, bus_id, mw, start, duration, &pool, DynamicLaw::default())?;
                let rec = {
                    let mut sum = SumProfile::new(vec![&mut noise, &mut d]);
                    simulate_detailed(model, &mut sum, sim_opts(cfg))?
                };
                (d.to_scenario(), rec)
            }
        }
    };
    attack.magnitude_fraction = Some(frac);

    // Observe a participating station that switched inside the visible tail.
    let candidates: Vec<usize> = attack
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.station_ids.is_empty() && g.events.iter().any(|e| e.time >= start - 1e-9 && e.time <= t_end + 1e-9))
        .map(|(i, _)| i)
        .collect();
    let g = *candidates
        .choose(rng)
        .ok_or_else(|| DatasetError::Infeasible("no attack station switched inside the window tail".into()))?;
    let station_id = *attack.groups[g].station_ids.choose(rng).expect("non-empty group");

    let profile = sample_profile(rng);
    let params = profile.default_params().with_rate(rng.random_range(0.5..=60.0));
    let mut station_events = history_before(rng, profile, &params, start);
    station_events.extend(attack.groups[g].events.iter().filter(|e| e.time <= t_end + 1e-9));

    let label = label_window(Some(&attack), station_id, t_end, cfg.regime, cfg.horizon_s)?;
    let freq = bus_trace(model, &rec, bus_id, t_end)?;
    Ok(Scenario { class, bus_id, station_id, station_events, t_end, label, freq })
}

fn synth_one(model: &GridModel, cfg: &DatasetConfig, seed: u64, id: usize) -> Result<RawSample, DatasetError> {
    let class = cfg.class_of(id);
    let mut rng = stream_rng(seed, Stream::Scenario, id as u64);
    let sc = if class.is_attack() {
        attack_scenario(model, cfg, class, &mut rng)?
    } else {
        normal_scenario(model, cfg, class, &mut rng)?
    };
    crate::fleet::validate_events(&sc.station_events)?;
    let series = window_from_events(&sc.station_events, sc.t_end);
    Ok(RawSample {
        meta: SampleMeta {
            scenario_id: id as u64,
            station_id: sc.station_id,
            bus_id: sc.bus_id,
            t_end: sc.t_end,
            regime: cfg.regime,
        },
        label: sc.label,
        class: sc.class,
        event_codes: series.slots().iter().map(|s| event_code(*s)).collect(),
        freq_hz: sc.freq,
    })
}

/// Generates `cfg.normal + cfg.attack` scenarios, one window each, in
/// parallel; the result depends only on `cfg` and `seed`.
pub fn synthesize_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let model = build_grid(&GridConfig::builtin(&cfg.grid))?;
    let total = cfg.normal + cfg.attack;
    let samples: Vec<RawSample> = (0..total)
        .into_par_iter()
        .map(|id| synth_one(&model, cfg, seed, id))
        .collect::<Result<_, _>>()?;
    let bounds = NormBounds::fit(&samples)?;
    debug_assert!(samples.iter().all(|s| s.event_codes.len() == WINDOW_TICKS));
    Ok(Dataset { samples, bounds, regime: cfg.regime })
}
