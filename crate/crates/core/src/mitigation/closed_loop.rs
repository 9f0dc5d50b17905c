use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::algorithm::{delay_for_request, detect_on_event, FrequencyHistory, Label, ModelPair, MitigationState, OperatorReport, MAX_DELAY_S};
use super::MitigationError;
use crate::attack::{fleet_size_for_attack, square_wave, station_pool, WaveParams};
use crate::fleet::{EventKind, Fleet, RequestGate, Station, StationLog};
use crate::grid::{BenignNoise, GridModel, GridState, GridView, Integrator, LoadProfile, NoiseConfig, DEFAULT_DT};
use crate::rng::{stream_rng, Rng, Stream};
use crate::signal::{peak_to_peak, power_at};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigationConfig {
    /// Benign lead-in so every station has a full window when the attack starts.
    pub preroll_s: f64,
    /// Attack start on the reported clock, which begins after the pre-roll.
    pub attack_offset_s: f64,
    pub attack_duration_s: f64,
    /// Simulated time after the attack ends.
    pub tail_s: f64,
    pub attack_bus: u32,
    pub magnitude_mw: f64,
    pub period_s: f64,
    pub duty: f64,
    pub charge_rate_kw: f64,
    pub noise_cap: f64,
    /// Worst-case detection latency after attack start.
    pub detection_delay_s: f64,
    pub normal_band_hz: f64,
    pub dt: f64,
    pub trace_every_s: f64,
    /// Span after mitigation start used for the spectral and plateau measures.
    pub analysis_span_s: f64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            preroll_s: 120.0,
            attack_offset_s: 5.0,
            attack_duration_s: 40.0,
            tail_s: 5.0,
            attack_bus: 5,
            magnitude_mw: 84.0,
            period_s: 2.4,
            duty: 0.5,
            charge_rate_kw: 11.0,
            noise_cap: 0.02,
            detection_delay_s: 5.0,
            normal_band_hz: crate::grid::DEFAULT_NORMAL_BAND_HZ,
            dt: DEFAULT_DT,
            trace_every_s: 0.05,
            analysis_span_s: 30.0,
        }
    }
}

impl MitigationConfig {
    pub fn validate(&self) -> Result<(), MitigationError> {
        let pos = [self.attack_duration_s, self.period_s, self.charge_rate_kw, self.dt, self.trace_every_s, self.analysis_span_s, self.normal_band_hz];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(MitigationError::Config("durations, period, rate, dt, band and trace interval must be positive".into()));
        }
        if !(self.preroll_s >= 0.0 && self.attack_offset_s >= 0.0 && self.tail_s >= 0.0 && self.detection_delay_s >= 0.0) {
            return Err(MitigationError::Config("offsets must be non-negative".into()));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(MitigationError::Config(format!("duty {} not in (0, 1)", self.duty)));
        }
        if !(0.0..1.0).contains(&self.noise_cap) {
            return Err(MitigationError::Config(format!("noise cap {} not in [0, 1)", self.noise_cap)));
        }
        if !(self.magnitude_mw > 0.0) {
            return Err(MitigationError::Config("attack magnitude must be positive".into()));
        }
        let per = self.trace_every_s / self.dt;
        if (per - per.round()).abs() > 1e-6 || per.round() < 1.0 || (0.5 / self.trace_every_s).fract().abs() > 1e-6 {
            return Err(MitigationError::Config("trace interval must be a multiple of dt dividing 0.5 s".into()));
        }
        Ok(())
    }

    pub fn attack_start(&self) -> f64 {
        self.preroll_s + self.attack_offset_s
    }

    pub fn attack_end(&self) -> f64 {
        self.attack_start() + self.attack_duration_s
    }

    pub fn horizon(&self) -> f64 {
        self.attack_end() + self.tail_s
    }
}

/// How stations decide whether they are under attack.
pub enum Detection<'a> {
    /// Oracle: every station turns abnormal exactly `detection_delay_s`
    /// after attack start and stays so.
    WorstCase,
    Models(&'a mut ModelPair),
    /// Reference run with no defence.
    Disabled,
}

impl Detection<'_> {
    pub fn mode_name(&self) -> &'static str {
        match self {
            Detection::WorstCase => "worst-case",
            Detection::Models(_) => "models",
            Detection::Disabled => "disabled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo_s: f64,
    pub hi_s: f64,
    pub count: u64,
}

/// Reproducible results of a closed-loop run. Times are on the reported
/// clock (pre-roll removed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationSummary {
    pub mode: String,
    pub grid: String,
    pub attack_bus: u32,
    pub stations: usize,
    pub charge_rate_kw: f64,
    pub attack_mw: f64,
    pub period_s: f64,
    pub attack_start_s: f64,
    pub attack_end_s: f64,
    pub detection_time_s: Option<f64>,
    pub mitigation_start_s: Option<f64>,
    /// Delay from mitigation start until the swings that follow are
    /// clearly smaller than the last unmitigated cycle.
    pub decay_onset_s: Option<f64>,
    /// Delay from mitigation start until the bus frequency enters the
    /// normal band for good (until the attack ends).
    pub time_to_normal_band_s: Option<f64>,
    pub normal_band_hz: f64,
    pub plateau_mw: Option<f64>,
    pub plateau_fraction: Option<f64>,
    /// Attack-load power at the fundamental, mitigated over unmitigated.
    pub spectral_ratio: Option<f64>,
    /// Bus frequency peak-to-peak once delays have settled (from mitigation
    /// start plus the maximum delay to attack end); the whole attack when
    /// there is no mitigation.
    pub unmitigated_p2p_hz: f64,
    pub mitigated_p2p_hz: Option<f64>,
    pub delayed_requests: u64,
    pub delay_histogram: Vec<HistogramBin>,
    pub activations: u64,
    pub operator_reports: u64,
    pub first_reports: Vec<OperatorReport>,
    pub cold_starts: u64,
    pub model_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub summary: MitigationSummary,
    pub time_s: Vec<f64>,
    /// Attack bus frequency without any defence.
    pub freq_unmitigated_hz: Vec<f64>,
    pub freq_mitigated_hz: Vec<f64>,
    pub attack_load_unmitigated_mw: Vec<f64>,
    pub attack_load_mitigated_mw: Vec<f64>,
}

struct Gate<'a, 'b> {
    detection: &'a mut Detection<'b>,
    detect_at: f64,
    index: HashMap<u32, usize>,
    states: Vec<MitigationState>,
    rngs: Vec<Rng>,
    history: Vec<FrequencyHistory>,
    bus_pos: HashMap<u32, usize>,
    delays: Vec<f64>,
    first_activation: Option<f64>,
    error: Option<MitigationError>,
}

impl RequestGate for Gate<'_, '_> {
    fn delay(&mut self, station: &Station, log: &StationLog, kind: EventKind, t: f64) -> f64 {
        if self.error.is_some() {
            return 0.0;
        }
        let i = self.index[&station.station_id];
        let state = &mut self.states[i];
        let active = match self.detection {
            Detection::Disabled => return 0.0,
            Detection::WorstCase => {
                let l = if t >= self.detect_at - 1e-9 { Label::Abnormal } else { Label::Normal };
                state.observe(t, station.station_id, station.bus_id, l, l)
            }
            Detection::Models(pair) => {
                let b = self.bus_pos[&station.bus_id];
                match detect_on_event(state, pair, station, log, Some(kind), &self.history[b], b, t) {
                    Ok(a) => a,
                    Err(e) => {
                        self.error = Some(e);
                        return 0.0;
                    }
                }
            }
        };
        if active && self.first_activation.is_none() {
            self.first_activation = Some(t);
        }
        let d = delay_for_request(&mut self.rngs[i], state);
        if d > 0.0 {
            self.delays.push(d);
        }
        d
    }
}

struct RunTrace {
    freq: Vec<f64>,
    load: Vec<f64>,
    delays: Vec<f64>,
    first_activation: Option<f64>,
    states: Vec<MitigationState>,
}

fn run_once(
    model: &GridModel,
    cfg: &MitigationConfig,
    detection: &mut Detection<'_>,
    seed: u64,
) -> Result<RunTrace, MitigationError> {
    let bus_index = model.bus_index(cfg.attack_bus)?;
    let n = fleet_size_for_attack(cfg.magnitude_mw, cfg.charge_rate_kw)? as usize;
    if n == 0 {
        return Err(MitigationError::Config("attack magnitude below one station".into()));
    }
    let pool = station_pool(1, cfg.attack_bus, n, cfg.charge_rate_kw);
    let attack_mw = n as f64 * cfg.charge_rate_kw / 1000.0;
    let scenario = square_wave(
        &WaveParams {
            bus: cfg.attack_bus,
            period: cfg.period_s,
            duty: cfg.duty,
            magnitude_mw: attack_mw,
            start: cfg.attack_start(),
            duration: cfg.attack_duration_s,
        },
        &pool,
    )?;
    let bus_ids: Vec<u32> = model.buses.iter().map(|b| b.bus_id).collect();
    let mut fleet = Fleet::new(pool.clone(), &bus_ids)?;
    let index: HashMap<u32, usize> = pool.iter().enumerate().map(|(i, s)| (s.station_id, i)).collect();
    for g in &scenario.groups {
        for id in &g.station_ids {
            for e in &g.events {
                fleet.request(index[id], e.kind, e.time)?;
            }
        }
    }

    let mut noise = BenignNoise::new(
        model,
        NoiseConfig { cap_fraction: cfg.noise_cap, ..NoiseConfig::default() },
        stream_rng(seed, Stream::Noise, 0),
    )?;
    let mut gate = Gate {
        detection,
        detect_at: cfg.attack_start() + cfg.detection_delay_s,
        rngs: pool.iter().map(|s| stream_rng(seed, Stream::Mitigation, s.station_id as u64)).collect(),
        states: vec![MitigationState::new(); n],
        index,
        history: vec![FrequencyHistory::default(); model.n_buses()],
        bus_pos: bus_ids.iter().enumerate().map(|(i, b)| (*b, i)).collect(),
        delays: Vec::new(),
        first_activation: None,
        error: None,
    };

    let steps = (cfg.horizon() / cfg.dt).round() as usize;
    let per_trace = (cfg.trace_every_s / cfg.dt).round() as usize;
    let per_tick = (crate::fleet::TICK_S / cfg.dt).round() as usize;
    let mut state = GridState::equilibrium(model);
    let mut integ = Integrator::new(model);
    let mut noise_mw = vec![0.0; model.n_buses()];
    let mut total = vec![0.0; model.n_buses()];
    let mut freq = Vec::with_capacity(steps / per_trace);
    let mut load = Vec::with_capacity(steps / per_trace);
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        state.time = t;
        let step = fleet.advance(t, cfg.dt, &mut gate)?;
        if let Some(e) = gate.error.take() {
            return Err(e);
        }
        noise.load_mw(t, &GridView { model, state: &state }, &mut noise_mw);
        for ((o, a), b) in total.iter_mut().zip(&noise_mw).zip(&step.bus_load_mw) {
            *o = a + b;
        }
        integ.advance(model, &mut state, &total, cfg.dt)?;
        let now = (k + 1) as f64 * cfg.dt;
        state.time = now;
        if (k + 1) % per_tick == 0 {
            for (b, h) in gate.history.iter_mut().enumerate() {
                h.push(now, GridView { model, state: &state }.bus_frequency_at(b));
            }
        }
        if (k + 1) % per_trace == 0 && now > cfg.preroll_s + 1e-9 {
            freq.push(GridView { model, state: &state }.bus_frequency_at(bus_index));
            load.push(step.bus_load_mw[bus_index]);
        }
    }
    Ok(RunTrace { freq, load, delays: gate.delays, first_activation: gate.first_activation, states: gate.states })
}

fn histogram(delays: &[f64]) -> Vec<HistogramBin> {
    let width = 0.5;
    let bins = (MAX_DELAY_S / width).round() as usize;
    let mut h: Vec<HistogramBin> =
        (0..bins).map(|i| HistogramBin { lo_s: i as f64 * width, hi_s: (i + 1) as f64 * width, count: 0 }).collect();
    for d in delays {
        // Bins are (lo, hi].
        let i = ((d / width).ceil() as usize).clamp(1, bins) - 1;
        h[i].count += 1;
    }
    h
}

/// First sample index `i >= from` such that every sample from `i` to `to`
/// lies within `band` of nominal.
fn band_entry(x: &[f64], from: usize, to: usize, nominal: f64, band: f64) -> Option<usize> {
    let to = to.min(x.len());
    if from >= to {
        return None;
    }
    let mut entry = from;
    for i in from..to {
        if (x[i] - nominal).abs() > band {
            entry = i + 1;
        }
    }
    (entry < to).then_some(entry)
}

/// First index `i >= from` whose following period has a peak-to-peak below
/// 90% of the period before `from`.
fn decay_onset(x: &[f64], from: usize, period: usize) -> Option<usize> {
    if from < period {
        return None;
    }
    let before = peak_to_peak(&x[from - period..from]);
    (from..x.len().saturating_sub(period)).find(|&i| peak_to_peak(&x[i..i + period]) < 0.9 * before)
}

/// Simulates the attack twice on identical noise, once undefended and once
/// with every attack station running the random-delay defence.
pub fn run_closed_loop(
    model: &GridModel,
    cfg: &MitigationConfig,
    mut detection: Detection<'_>,
    seed: u64,
) -> Result<MitigationReport, MitigationError> {
    cfg.validate()?;
    let base = run_once(model, cfg, &mut Detection::Disabled, seed)?;
    let defended = match detection {
        Detection::Disabled => None,
        _ => Some(run_once(model, cfg, &mut detection, seed)?),
    };
    let dt = cfg.trace_every_s;
    let time_s: Vec<f64> = (1..=base.freq.len()).map(|i| i as f64 * dt).collect();
    let idx = |t: f64| ((t / dt).round() as usize).saturating_sub(1);
    let attack_start = cfg.attack_offset_s;
    let attack_end = attack_start + cfg.attack_duration_s;
    let period = (cfg.period_s / dt).round() as usize;
    let n = fleet_size_for_attack(cfg.magnitude_mw, cfg.charge_rate_kw)? as usize;
    let attack_mw = n as f64 * cfg.charge_rate_kw / 1000.0;
    let nominal = model.nominal_freq;

    let mut summary = MitigationSummary {
        mode: detection.mode_name().into(),
        grid: model.name.clone(),
        attack_bus: cfg.attack_bus,
        stations: n,
        charge_rate_kw: cfg.charge_rate_kw,
        attack_mw,
        period_s: cfg.period_s,
        attack_start_s: attack_start,
        attack_end_s: attack_end,
        detection_time_s: None,
        mitigation_start_s: None,
        decay_onset_s: None,
        time_to_normal_band_s: None,
        normal_band_hz: cfg.normal_band_hz,
        plateau_mw: None,
        plateau_fraction: None,
        spectral_ratio: None,
        unmitigated_p2p_hz: peak_to_peak(&base.freq[idx(attack_start)..idx(attack_end)]),
        mitigated_p2p_hz: None,
        delayed_requests: 0,
        delay_histogram: histogram(&[]),
        activations: 0,
        operator_reports: 0,
        first_reports: Vec::new(),
        cold_starts: 0,
        model_evaluations: match &detection {
            Detection::Models(p) => p.evaluations(),
            _ => 0,
        },
    };
    let mut report = MitigationReport {
        time_s,
        freq_unmitigated_hz: base.freq.clone(),
        freq_mitigated_hz: base.freq.clone(),
        attack_load_unmitigated_mw: base.load.clone(),
        attack_load_mitigated_mw: base.load.clone(),
        summary: summary.clone(),
    };
    let Some(run) = defended else {
        return Ok(report);
    };
    summary.delayed_requests = run.delays.len() as u64;
    summary.delay_histogram = histogram(&run.delays);
    summary.activations = run.states.iter().map(|s| s.activations).sum();
    summary.operator_reports = run.states.iter().map(|s| s.report_log.len() as u64).sum();
    let mut first: Vec<OperatorReport> = run.states.iter().filter_map(|s| s.report_log.first().copied()).collect();
    first.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.station_id.cmp(&b.station_id)));
    first.truncate(10);
    for r in &mut first {
        r.time -= cfg.preroll_s;
    }
    summary.first_reports = first;
    summary.cold_starts = run.states.iter().map(|s| s.cold_starts).sum();
    if let Detection::Models(p) = &detection {
        summary.model_evaluations = p.evaluations();
    }
    // The oracle switches the defence on at a fixed instant; with models it
    // starts at the first station activation.
    let enabled = match detection {
        Detection::WorstCase => Some(cfg.attack_start() + cfg.detection_delay_s),
        _ => run.first_activation,
    };
    if let Some(t) = enabled {
        let ms = t - cfg.preroll_s;
        summary.detection_time_s = Some(ms);
        summary.mitigation_start_s = Some(ms);
        let from = idx(ms) + 1;
        let to = idx(attack_end);
        summary.decay_onset_s = decay_onset(&run.freq[..to], from, period).map(|i| (i - from) as f64 * dt);
        summary.time_to_normal_band_s =
            band_entry(&run.freq, from, to, nominal, cfg.normal_band_hz).map(|i| (i - from) as f64 * dt);
        let settled = idx(ms + MAX_DELAY_S).min(to);
        if settled < to {
            summary.mitigated_p2p_hz = Some(peak_to_peak(&run.freq[settled..to]));
            summary.unmitigated_p2p_hz = peak_to_peak(&base.freq[settled..to]);
        }
        let span_end = idx(ms + cfg.analysis_span_s).min(to);
        if span_end > from + period {
            let plateau_from = idx(ms + MAX_DELAY_S).min(span_end - 1);
            let p = crate::signal::mean(&run.load[plateau_from..span_end]);
            summary.plateau_mw = Some(p);
            summary.plateau_fraction = Some(p / attack_mw);
            let f0 = 1.0 / cfg.period_s;
            let pm = power_at(&run.load[from..span_end], dt, f0);
            let pu = power_at(&base.load[from..span_end], dt, f0);
            summary.spectral_ratio = (pu > 0.0).then(|| pm / pu);
        }
    }
    report.summary = summary;
    report.freq_mitigated_hz = run.freq;
    report.attack_load_mitigated_mw = run.load;
    Ok(report)
}

/// Two-column CSV with the given value header.
pub fn write_trace_csv<W: Write>(mut w: W, header: &str, time_s: &[f64], values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "time_s,{header}")?;
    for (t, v) in time_s.iter().zip(values) {
        writeln!(w, "{t:.2},{v}")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_half_open_bins() {
        let h = histogram(&[0.1, 0.5, 0.51, 4.0]);
        assert_eq!(h.len(), 8);
        assert_eq!(h[0].count, 2);
        assert_eq!(h[1].count, 1);
        assert_eq!(h[7].count, 1);
    }

    #[test]
    fn band_entry_is_final() {
        let x = [60.3, 60.0, 60.2, 60.05, 60.0, 59.95];
        assert_eq!(band_entry(&x, 0, 6, 60.0, 0.1), Some(3));
        assert_eq!(band_entry(&[60.3, 60.3], 0, 2, 60.0, 0.1), None);
    }

    #[test]
    fn config_checks() {
        assert!(MitigationConfig::default().validate().is_ok());
        let bad = MitigationConfig { duty: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = MitigationConfig { trace_every_s: 0.03, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
