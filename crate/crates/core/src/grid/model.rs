use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{ExplicitGrid, GeneratorParams, GridConfig};
use super::GridError;

/// A load bus kept after network reduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bus {
    pub bus_id: u32,
    pub nominal_load_mw: f64,
    pub attached_generator_ids: Vec<u32>,
}

/// Validated reduced-order grid.
///
/// `coupling` is the susceptance Laplacian over the generator internal
/// nodes followed by the load buses, after Kron-eliminating every bus that
/// carries no load. The remaining matrices are derived from it once at
/// build time.
#[derive(Debug, Clone, Serialize)]
pub struct GridModel {
    pub name: String,
    pub base_mva: f64,
    pub nominal_freq: f64,
    pub trip_threshold_pu: f64,
    pub generators: Vec<GeneratorParams>,
    pub buses: Vec<Bus>,
    pub coupling: Vec<Vec<f64>>,
    /// Synchronizing matrix between generator angles (n_gen x n_gen).
    pub(crate) sync: Vec<f64>,
    /// Load-bus injection to generator electrical power (n_gen x n_bus).
    pub(crate) injection_share: Vec<f64>,
    /// Bus angle sensitivity to generator angles (n_bus x n_gen); rows sum to one.
    pub(crate) bus_weights: Vec<f64>,
    /// 2H on the system base, per generator.
    pub(crate) inertia_sys: Vec<f64>,
    pub(crate) damping_sys: Vec<f64>,
    /// 1/R on the system base, per generator.
    pub(crate) droop_gain_sys: Vec<f64>,
    pub(crate) governor_t: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Gen(u32),
    Bus(u32),
}

fn parse_node(name: &str) -> Result<Node, GridError> {
    let bad = || GridError::InvalidParameter(format!("bad node name {name:?}"));
    let (kind, rest) = name.split_at(name.len().min(1));
    let id: u32 = rest.parse().map_err(|_| bad())?;
    match kind {
        "g" | "G" => Ok(Node::Gen(id)),
        "b" | "B" => Ok(Node::Bus(id)),
        _ => Err(bad()),
    }
}

pub fn build_grid(config: &GridConfig) -> Result<GridModel, GridError> {
    GridModel::from_explicit(config.resolve()?)
}

impl GridModel {
    pub fn from_explicit(grid: ExplicitGrid) -> Result<Self, GridError> {
        if grid.generators.is_empty() {
            return Err(GridError::InvalidParameter("at least one generator required".into()));
        }
        if !(grid.base_mva.is_finite() && grid.base_mva > 0.0) {
            return Err(GridError::InvalidParameter("base_mva must be > 0".into()));
        }
        if !(grid.trip_threshold_pu.is_finite() && grid.trip_threshold_pu > 0.0) {
            return Err(GridError::InvalidParameter("trip_threshold_pu must be > 0".into()));
        }
        for g in &grid.generators {
            g.validate()?;
        }
        let f0 = grid.generators[0].nominal_freq;
        if grid.generators.iter().any(|g| g.nominal_freq != f0) {
            return Err(GridError::InvalidParameter("generators disagree on nominal_freq".into()));
        }

        let mut gen_ids = HashSet::new();
        for g in &grid.generators {
            if !gen_ids.insert(g.id) {
                return Err(GridError::InvalidParameter(format!("duplicate generator id {}", g.id)));
            }
        }
        let mut bus_ids = HashSet::new();
        for b in &grid.buses {
            if !bus_ids.insert(b.id) {
                return Err(GridError::InvalidParameter(format!("duplicate bus id {}", b.id)));
            }
            if !(b.nominal_load_mw.is_finite() && b.nominal_load_mw >= 0.0) {
                return Err(GridError::InvalidParameter(format!("bus {}: bad nominal load", b.id)));
            }
            if let Some(g) = b.attached_generators.iter().find(|g| !gen_ids.contains(g)) {
                return Err(GridError::InvalidParameter(format!(
                    "bus {} attaches unknown generator {g}",
                    b.id
                )));
            }
        }

        // Node ordering: generators, load buses (kept), network buses (eliminated).
        let load_buses: Vec<_> = grid.buses.iter().filter(|b| b.nominal_load_mw > 0.0).collect();
        if load_buses.is_empty() {
            return Err(GridError::InvalidParameter("at least one loaded bus required".into()));
        }
        let mut order: Vec<Node> = grid.generators.iter().map(|g| Node::Gen(g.id)).collect();
        order.extend(load_buses.iter().map(|b| Node::Bus(b.id)));
        order.extend(
            grid.buses.iter().filter(|b| b.nominal_load_mw <= 0.0).map(|b| Node::Bus(b.id)),
        );
        let index: HashMap<Node, usize> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();

        let n = order.len();
        let mut lap = DMatrix::<f64>::zeros(n, n);
        for br in &grid.branches {
            let a = parse_node(&br.from)?;
            let b = parse_node(&br.to)?;
            let (ia, ib) = match (index.get(&a), index.get(&b)) {
                (Some(&ia), Some(&ib)) if ia != ib => (ia, ib),
                _ => {
                    return Err(GridError::InvalidParameter(format!(
                        "branch {}-{} references unknown or identical nodes",
                        br.from, br.to
                    )))
                }
            };
            if !(br.x.is_finite() && br.x > 0.0) {
                return Err(GridError::InvalidParameter(format!(
                    "branch {}-{}: reactance must be > 0",
                    br.from, br.to
                )));
            }
            let b = 1.0 / br.x;
            lap[(ia, ia)] += b;
            lap[(ib, ib)] += b;
            lap[(ia, ib)] -= b;
            lap[(ib, ia)] -= b;
        }

        let keep = grid.generators.len() + load_buses.len();
        let coupling = if keep == n {
            lap
        } else {
            let kk = lap.view((0, 0), (keep, keep)).into_owned();
            let ke = lap.view((0, keep), (keep, n - keep)).into_owned();
            let ee = lap.view((keep, keep), (n - keep, n - keep)).into_owned();
            let ee_inv = ee.try_inverse().ok_or_else(|| {
                GridError::InvalidParameter("network buses are not connected to the grid".into())
            })?;
            &kk - &ke * ee_inv * ke.transpose()
        };
        // Symmetrize away round-off from the reduction.
        let coupling = (&coupling + coupling.transpose()) * 0.5;

        let ng = grid.generators.len();
        let nl = load_buses.len();
        let b_gg = coupling.view((0, 0), (ng, ng)).into_owned();
        let b_gl = coupling.view((0, ng), (ng, nl)).into_owned();
        let b_ll = coupling.view((ng, ng), (nl, nl)).into_owned();
        let b_ll_inv = b_ll.try_inverse().ok_or_else(|| {
            GridError::InvalidParameter("load buses are not connected to any generator".into())
        })?;
        let share = &b_gl * &b_ll_inv;
        let sync = &b_gg - &share * b_gl.transpose();
        let weights = -(&b_ll_inv * b_gl.transpose());

        let to_rows = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut v = Vec::with_capacity(m.nrows() * m.ncols());
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    v.push(m[(r, c)]);
                }
            }
            v
        };

        let base = grid.base_mva;
        let model = GridModel {
            name: grid.name.clone(),
            base_mva: base,
            nominal_freq: f0,
            trip_threshold_pu: grid.trip_threshold_pu,
            inertia_sys: grid.generators.iter().map(|g| 2.0 * g.inertia_h * g.rated_mva / base).collect(),
            damping_sys: grid.generators.iter().map(|g| g.damping_d * g.rated_mva / base).collect(),
            droop_gain_sys: grid.generators.iter().map(|g| g.rated_mva / (base * g.droop_r)).collect(),
            governor_t: grid.generators.iter().map(|g| g.governor_t).collect(),
            generators: grid.generators,
            buses: load_buses
                .iter()
                .map(|b| Bus {
                    bus_id: b.id,
                    nominal_load_mw: b.nominal_load_mw,
                    attached_generator_ids: b.attached_generators.clone(),
                })
                .collect(),
            coupling: (0..keep).map(|r| (0..keep).map(|c| coupling[(r, c)]).collect()).collect(),
            sync: to_rows(&sync),
            injection_share: to_rows(&share),
            bus_weights: to_rows(&weights),
        };
        model.check_invariants()?;
        Ok(model)
    }

    fn check_invariants(&self) -> Result<(), GridError> {
        let n = self.coupling.len();
        for r in 0..n {
            let scale: f64 = self.coupling[r].iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            let row_sum: f64 = self.coupling[r].iter().sum();
            if row_sum.abs() > 1e-9 * scale {
                return Err(GridError::InvalidParameter(format!("coupling row {r} does not sum to zero")));
            }
            for c in 0..n {
                if (self.coupling[r][c] - self.coupling[c][r]).abs() > 1e-12 * scale {
                    return Err(GridError::InvalidParameter("coupling is not symmetric".into()));
                }
            }
        }
        let ng = self.generators.len();
        for (l, row) in self.bus_weights.chunks(ng).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|w| *w < -1e-12) {
                return Err(GridError::InvalidParameter(format!(
                    "bus {} weights are not a convex combination",
                    self.buses[l].bus_id
                )));
            }
        }
        Ok(())
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, bus_id: u32) -> Result<usize, GridError> {
        self.buses
            .iter()
            .position(|b| b.bus_id == bus_id)
            .ok_or(GridError::UnknownBus(bus_id))
    }

    /// Weights of each generator's speed in the frequency seen at a bus.
    pub fn bus_weight_row(&self, bus_index: usize) -> &[f64] {
        let ng = self.generators.len();
        &self.bus_weights[bus_index * ng..(bus_index + 1) * ng]
    }

    pub fn total_nominal_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.nominal_load_mw).sum()
    }

    /// Aggregate system stiffness in pu power per pu frequency: the sum of
    /// governor gains and damping on the system base.
    pub fn frequency_response_pu(&self) -> f64 {
        self.droop_gain_sys.iter().sum::<f64>() + self.damping_sys.iter().sum::<f64>()
    }
}
