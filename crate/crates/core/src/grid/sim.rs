use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use super::{GridError, GridModel};

/// Largest admissible integration step (s).
pub const MAX_DT: f64 = 0.05;
/// Default integration step (s).
pub const DEFAULT_DT: f64 = 0.01;
/// Default trace sampling interval (s).
pub const DEFAULT_SAMPLE_EVERY: f64 = 0.5;

/// Deviation state around the scheduled operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridState {
    pub rotor_angles: Vec<f64>,
    pub rotor_speed_dev: Vec<f64>,
    pub mech_power: Vec<f64>,
    pub time: f64,
}

impl GridState {
    pub fn equilibrium(model: &GridModel) -> Self {
        let n = model.n_generators();
        GridState {
            rotor_angles: vec![0.0; n],
            rotor_speed_dev: vec![0.0; n],
            mech_power: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn max_abs_speed_dev(&self) -> f64 {
        self.rotor_speed_dev.iter().fold(0.0, |m, w| m.max(w.abs()))
    }
}

/// Frequency (Hz) at a load bus: nominal frequency scaled by the
/// electrical-distance weighted average of generator speed deviations.
pub fn bus_frequency(model: &GridModel, state: &GridState, bus_id: u32) -> Result<f64, GridError> {
    let idx = model.bus_index(bus_id)?;
    Ok(bus_frequency_at(model, state, idx))
}

pub(crate) fn bus_frequency_at(model: &GridModel, state: &GridState, bus_index: usize) -> f64 {
    let w = model.bus_weight_row(bus_index);
    let dev: f64 = w.iter().zip(&state.rotor_speed_dev).map(|(a, b)| a * b).sum();
    model.nominal_freq * (1.0 + dev)
}

/// Read-only view handed to load profiles so closed-loop sources (e.g. a
/// feedback attacker) can observe the grid.
pub struct GridView<'a> {
    pub model: &'a GridModel,
    pub state: &'a GridState,
}

impl GridView<'_> {
    pub fn bus_frequency_at(&self, bus_index: usize) -> f64 {
        bus_frequency_at(self.model, self.state, bus_index)
    }
}

/// A time-indexed per-bus load deviation (MW), held constant over each
/// integration step.
pub trait LoadProfile {
    fn load_mw(&mut self, t: f64, grid: &GridView<'_>, out: &mut [f64]);
}

/// No perturbation at all.
pub struct FlatProfile;

impl LoadProfile for FlatProfile {
    fn load_mw(&mut self, _t: f64, _grid: &GridView<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Adapts a closure `(t, out)` that ignores grid feedback.
pub struct FnProfile<F>(pub F);

impl<F: FnMut(f64, &mut [f64])> LoadProfile for FnProfile<F> {
    fn load_mw(&mut self, t: f64, _grid: &GridView<'_>, out: &mut [f64]) {
        (self.0)(t, out)
    }
}

/// Sum of several profiles.
pub struct SumProfile<'a> {
    parts: Vec<&'a mut dyn LoadProfile>,
    scratch: Vec<f64>,
}

impl<'a> SumProfile<'a> {
    pub fn new(parts: Vec<&'a mut dyn LoadProfile>) -> Self {
        SumProfile { parts, scratch: Vec::new() }
    }
}

impl LoadProfile for SumProfile<'_> {
    fn load_mw(&mut self, t: f64, grid: &GridView<'_>, out: &mut [f64]) {
        out.fill(0.0);
        self.scratch.resize(out.len(), 0.0);
        for p in self.parts.iter_mut() {
            p.load_mw(t, grid, &mut self.scratch);
            for (o, s) in out.iter_mut().zip(&self.scratch) {
                *o += s;
            }
        }
    }
}

/// RK4 integrator with reusable scratch space.
pub struct Integrator {
    ng: usize,
    nl: usize,
    injection: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    x: Vec<f64>,
}

impl Integrator {
    pub fn new(model: &GridModel) -> Self {
        let ng = model.n_generators();
        let n = 3 * ng;
        Integrator {
            ng,
            nl: model.n_buses(),
            injection: vec![0.0; model.n_buses()],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
            x: vec![0.0; n],
        }
    }

    /// x = [delta; dw; pm]
    fn derivative(model: &GridModel, ng: usize, nl: usize, inj: &[f64], x: &[f64], dx: &mut [f64]) {
        let omega_s = 2.0 * PI * model.nominal_freq;
        let (delta, rest) = x.split_at(ng);
        let (dw, pm) = rest.split_at(ng);
        for i in 0..ng {
            let row = &model.sync[i * ng..(i + 1) * ng];
            let mut pe: f64 = row.iter().zip(delta).map(|(k, d)| k * d).sum();
            let share = &model.injection_share[i * nl..(i + 1) * nl];
            pe += share.iter().zip(inj).map(|(g, p)| g * p).sum::<f64>();
            dx[i] = omega_s * dw[i];
            dx[ng + i] = (pm[i] - pe - model.damping_sys[i] * dw[i]) / model.inertia_sys[i];
            dx[2 * ng + i] = (-dw[i] * model.droop_gain_sys[i] - pm[i]) / model.governor_t[i];
        }
    }

    /// Advances `state` in place by one RK4 step with the per-bus load
    /// deviation (MW) held over the step.
    pub fn advance(
        &mut self,
        model: &GridModel,
        state: &mut GridState,
        load_delta_mw: &[f64],
        dt: f64,
    ) -> Result<(), GridError> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(GridError::Precondition(format!("dt = {dt} outside (0, {MAX_DT}]")));
        }
        if load_delta_mw.len() != self.nl {
            return Err(GridError::Precondition(format!(
                "load vector has {} entries, model has {} buses",
                load_delta_mw.len(),
                self.nl
            )));
        }
        if load_delta_mw.iter().any(|v| !v.is_finite()) {
            return Err(GridError::Precondition("non-finite load deviation".into()));
        }
        let ng = self.ng;
        let nl = self.nl;
        // A load increase is a negative injection at its bus.
        for (p, l) in self.injection.iter_mut().zip(load_delta_mw) {
            *p = -l / model.base_mva;
        }
        self.x[..ng].copy_from_slice(&state.rotor_angles);
        self.x[ng..2 * ng].copy_from_slice(&state.rotor_speed_dev);
        self.x[2 * ng..].copy_from_slice(&state.mech_power);

        let n = 3 * ng;
        let [k1, k2, k3, k4] = &mut self.k;
        Self::derivative(model, ng, nl, &self.injection, &self.x, k1);
        for j in 0..n {
            self.tmp[j] = self.x[j] + 0.5 * dt * k1[j];
        }
        Self::derivative(model, ng, nl, &self.injection, &self.tmp, k2);
        for j in 0..n {
            self.tmp[j] = self.x[j] + 0.5 * dt * k2[j];
        }
        Self::derivative(model, ng, nl, &self.injection, &self.tmp, k3);
        for j in 0..n {
            self.tmp[j] = self.x[j] + dt * k3[j];
        }
        Self::derivative(model, ng, nl, &self.injection, &self.tmp, k4);
        for j in 0..n {
            self.x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }

        let time = state.time + dt;
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NumericalFault { time });
        }
        state.rotor_angles.copy_from_slice(&self.x[..ng]);
        state.rotor_speed_dev.copy_from_slice(&self.x[ng..2 * ng]);
        state.mech_power.copy_from_slice(&self.x[2 * ng..]);
        state.time = time;
        for (i, w) in state.rotor_speed_dev.iter().enumerate() {
            if w.abs() > model.trip_threshold_pu {
                return Err(GridError::SimulationFault {
                    time,
                    generator: model.generators[i].id,
                    speed_dev: *w,
                });
            }
        }
        Ok(())
    }
}

/// One RK4 step of the swing/governor dynamics; returns the new state.
pub fn step(
    model: &GridModel,
    state: &GridState,
    load_delta_mw: &[f64],
    dt: f64,
) -> Result<GridState, GridError> {
    let mut next = state.clone();
    Integrator::new(model).advance(model, &mut next, load_delta_mw, dt)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyTrace {
    pub bus_id: u32,
    pub tick_interval: f64,
    /// Sample `i` is taken at time `(i + 1) * tick_interval`.
    pub samples: Vec<f64>,
}

impl FrequencyTrace {
    pub fn time_of(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.tick_interval
    }

    pub fn peak_to_peak(&self) -> f64 {
        crate::signal::peak_to_peak(&self.samples)
    }
}

/// Writes traces as `time_s,bus_id,freq_hz` rows.
pub fn write_traces_csv<W: Write>(mut out: W, traces: &[FrequencyTrace]) -> std::io::Result<()> {
    writeln!(out, "time_s,bus_id,freq_hz")?;
    for tr in traces {
        for (i, f) in tr.samples.iter().enumerate() {
            writeln!(out, "{:.3},{},{:.9}", tr.time_of(i), tr.bus_id, f)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub dt: f64,
    pub sample_every: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { horizon: 120.0, dt: DEFAULT_DT, sample_every: DEFAULT_SAMPLE_EVERY }
    }
}

fn whole_multiple(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    if n >= 1.0 && (r - n).abs() < 1e-6 {
        Some(n as usize)
    } else {
        None
    }
}

impl SimOptions {
    /// (total steps, steps per sample)
    pub fn step_counts(&self) -> Result<(usize, usize), GridError> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(GridError::Precondition(format!("dt = {} outside (0, {MAX_DT}]", self.dt)));
        }
        let per_sample = whole_multiple(self.sample_every, self.dt).ok_or_else(|| {
            GridError::Precondition("sample_every must be a multiple of dt".into())
        })?;
        let samples = whole_multiple(self.horizon, self.sample_every).ok_or_else(|| {
            GridError::Precondition("horizon must be a multiple of sample_every".into())
        })?;
        Ok((samples * per_sample, per_sample))
    }
}

/// Everything recorded by [`simulate_detailed`], sampled every
/// `sample_every` seconds; index `i` is time `(i + 1) * sample_every`.
#[derive(Debug, Clone, Serialize)]
pub struct SimRecord {
    pub sample_every: f64,
    pub times: Vec<f64>,
    /// Per bus, in model bus order.
    pub bus_freq: Vec<Vec<f64>>,
    /// Per generator speed deviation (pu).
    pub gen_speed_dev: Vec<Vec<f64>>,
    /// Per bus load deviation (MW) in force during the step ending at each sample.
    pub bus_load_mw: Vec<Vec<f64>>,
    pub final_state: GridState,
}

impl SimRecord {
    pub fn traces(&self, model: &GridModel) -> Vec<FrequencyTrace> {
        model
            .buses
            .iter()
            .zip(&self.bus_freq)
            .map(|(b, s)| FrequencyTrace {
                bus_id: b.bus_id,
                tick_interval: self.sample_every,
                samples: s.clone(),
            })
            .collect()
    }
}

/// Runs the model from `initial` under `profile`, recording samples.
pub fn simulate_from(
    model: &GridModel,
    initial: GridState,
    profile: &mut dyn LoadProfile,
    opts: SimOptions,
) -> Result<SimRecord, GridError> {
    let (steps, per_sample) = opts.step_counts()?;
    let nl = model.n_buses();
    let ng = model.n_generators();
    let n_samples = steps / per_sample;
    let mut rec = SimRecord {
        sample_every: opts.sample_every,
        times: Vec::with_capacity(n_samples),
        bus_freq: vec![Vec::with_capacity(n_samples); nl],
        gen_speed_dev: vec![Vec::with_capacity(n_samples); ng],
        bus_load_mw: vec![Vec::with_capacity(n_samples); nl],
        final_state: initial.clone(),
    };
    let t0 = initial.time;
    let mut state = initial;
    let mut integ = Integrator::new(model);
    let mut load = vec![0.0; nl];
    for k in 0..steps {
        let t = t0 + k as f64 * opts.dt;
        state.time = t;
        profile.load_mw(t, &GridView { model, state: &state }, &mut load);
        integ.advance(model, &mut state, &load, opts.dt)?;
        if (k + 1) % per_sample == 0 {
            state.time = t0 + (k + 1) as f64 * opts.dt;
            rec.times.push(state.time);
            for b in 0..nl {
                rec.bus_freq[b].push(bus_frequency_at(model, &state, b));
                rec.bus_load_mw[b].push(load[b]);
            }
            for g in 0..ng {
                rec.gen_speed_dev[g].push(state.rotor_speed_dev[g]);
            }
        }
    }
    rec.final_state = state;
    Ok(rec)
}

pub fn simulate_detailed(
    model: &GridModel,
    profile: &mut dyn LoadProfile,
    opts: SimOptions,
) -> Result<SimRecord, GridError> {
    simulate_from(model, GridState::equilibrium(model), profile, opts)
}

/// Per-bus frequency traces from equilibrium over `horizon`.
pub fn simulate(
    model: &GridModel,
    profile: &mut dyn LoadProfile,
    horizon: f64,
    dt: f64,
    sample_every: f64,
) -> Result<Vec<FrequencyTrace>, GridError> {
    let rec = simulate_detailed(model, profile, SimOptions { horizon, dt, sample_every })?;
    Ok(rec.traces(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};

    fn wscc9() -> GridModel {
        build_grid(&GridConfig::builtin("wscc9")).unwrap()
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let m = wscc9();
        let s0 = GridState::equilibrium(&m);
        let s1 = step(&m, &s0, &[0.0; 3], 0.01).unwrap();
        for (a, b) in s0.rotor_speed_dev.iter().zip(&s1.rotor_speed_dev) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s0.rotor_angles.iter().zip(&s1.rotor_angles) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((s1.time - 0.01).abs() < 1e-15);
    }

    #[test]
    fn load_step_slows_all_generators() {
        let m = wscc9();
        let mut s = GridState::equilibrium(&m);
        let load = [12.5, 0.0, 0.0];
        for _ in 0..100 {
            s = step(&m, &s, &load, 0.01).unwrap();
        }
        assert!(s.rotor_speed_dev.iter().all(|w| *w < 0.0), "{:?}", s.rotor_speed_dev);
    }

    #[test]
    fn dt_precondition() {
        let m = wscc9();
        let s = GridState::equilibrium(&m);
        assert!(matches!(step(&m, &s, &[0.0; 3], 0.1), Err(GridError::Precondition(_))));
        assert!(matches!(step(&m, &s, &[0.0; 3], 0.0), Err(GridError::Precondition(_))));
        assert!(matches!(
            step(&m, &s, &[f64::NAN, 0.0, 0.0], 0.01),
            Err(GridError::Precondition(_))
        ));
    }

    #[test]
    fn bus_frequency_examples() {
        let m = wscc9();
        let mut s = GridState::equilibrium(&m);
        assert_eq!(bus_frequency(&m, &s, 5).unwrap(), 60.0);
        s.rotor_speed_dev = vec![-0.001; 3];
        for b in [5, 6, 8] {
            assert!((bus_frequency(&m, &s, b).unwrap() - 59.94).abs() < 1e-9);
        }
        assert!(matches!(bus_frequency(&m, &s, 4), Err(GridError::UnknownBus(4))));
    }

    #[test]
    fn trip_raises_fault_with_time() {
        let m = wscc9();
        let mut p = FnProfile(|_t: f64, out: &mut [f64]| {
            out.fill(0.0);
            out[0] = 5000.0;
        });
        let err = simulate(&m, &mut p, 60.0, 0.01, 0.5).unwrap_err();
        match err {
            GridError::SimulationFault { time, .. } => assert!(time > 0.0 && time < 60.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn horizon_must_be_multiple() {
        let m = wscc9();
        assert!(simulate(&m, &mut FlatProfile, 10.25, 0.01, 0.5).is_err());
        assert!(simulate(&m, &mut FlatProfile, 10.0, 0.01, 0.333).is_err());
    }

    #[test]
    fn flat_profile_stays_nominal() {
        let m = wscc9();
        let traces = simulate(&m, &mut FlatProfile, 120.0, 0.01, 0.5).unwrap();
        assert_eq!(traces.len(), 3);
        for tr in &traces {
            assert_eq!(tr.samples.len(), 240);
            assert!(tr.samples.iter().all(|f| (f - 60.0).abs() < 1e-9));
        }
    }

    #[test]
    fn csv_header() {
        let tr = FrequencyTrace { bus_id: 5, tick_interval: 0.5, samples: vec![60.0, 59.99] };
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &[tr]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time_s,bus_id,freq_hz"));
        assert_eq!(lines.next(), Some("0.500,5,60.000000000"));
    }
}
