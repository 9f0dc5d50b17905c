use super::AttackScenario;
use crate::grid::{GridError, GridModel, GridView, LoadProfile};

/// Replays a scenario's schedules as a load deviation on its target bus.
/// Expects non-decreasing query times; an earlier time rewinds.
pub struct AttackLoad<'a> {
    scenario: &'a AttackScenario,
    bus_index: usize,
    cursors: Vec<usize>,
    on: Vec<bool>,
    last_t: f64,
}

impl<'a> AttackLoad<'a> {
    pub fn new(scenario: &'a AttackScenario, model: &GridModel) -> Result<Self, GridError> {
        let bus_index = model.bus_index(scenario.target_bus)?;
        let n = scenario.groups.len();
        Ok(AttackLoad { scenario, bus_index, cursors: vec![0; n], on: vec![false; n], last_t: f64::NEG_INFINITY })
    }

    pub fn bus_index(&self) -> usize {
        self.bus_index
    }

    /// Aggregate load (MW) at `t`, advancing the replay cursors.
    pub fn load_at(&mut self, t: f64) -> f64 {
        if t < self.last_t {
            self.cursors.fill(0);
            self.on.fill(false);
        }
        self.last_t = t;
        let mut total = 0.0;
        for (g, group) in self.scenario.groups.iter().enumerate() {
            let c = &mut self.cursors[g];
            while *c < group.events.len() && group.events[*c].time <= t + 1e-9 {
                self.on[g] = group.events[*c].kind == crate::fleet::EventKind::Start;
                *c += 1;
            }
            if self.on[g] {
                total += group.load_mw();
            }
        }
        total
    }
}

impl LoadProfile for AttackLoad<'_> {
    fn load_mw(&mut self, t: f64, _grid: &GridView<'_>, out: &mut [f64]) {
        out.fill(0.0);
        out[self.bus_index] = self.load_at(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{square_wave, station_pool, WaveParams};
    use crate::grid::{build_grid, GridConfig};

    #[test]
    fn replay_matches_stateless_query() {
        let m = build_grid(&GridConfig::builtin("wscc9")).unwrap();
        let p = WaveParams { bus: 8, period: 1.5, duty: 0.35, magnitude_mw: 10.0, start: 2.0, duration: 12.0 };
        let s = square_wave(&p, &station_pool(0, 8, 1000, 11.0)).unwrap();
        let mut load = AttackLoad::new(&s, &m).unwrap();
        assert_eq!(load.bus_index(), 2);
        for k in 0..2000 {
            let t = k as f64 * 0.01 + 0.005;
            assert_eq!(load.load_at(t), s.aggregate_load_mw(t), "t = {t}");
        }
    }
}
