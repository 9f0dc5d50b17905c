use serde::{Deserialize, Serialize};

use super::GridError;

/// Per-generator dynamic parameters, all on the machine's own MVA base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub id: u32,
    /// Inertia constant H (s).
    pub inertia_h: f64,
    /// Damping, pu power per pu speed deviation.
    pub damping_d: f64,
    /// Governor speed droop (pu).
    pub droop_r: f64,
    /// First-order governor/turbine time constant (s).
    pub governor_t: f64,
    pub rated_mva: f64,
    #[serde(default = "default_nominal_freq")]
    pub nominal_freq: f64,
}

fn default_nominal_freq() -> f64 {
    60.0
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), GridError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(GridError::InvalidParameter(format!("generator {}: {what}", self.id)))
            }
        };
        check(self.inertia_h.is_finite() && self.inertia_h > 0.0, "inertia_h must be > 0")?;
        check(self.droop_r.is_finite() && self.droop_r > 0.0, "droop_r must be > 0")?;
        check(self.governor_t.is_finite() && self.governor_t > 0.0, "governor_t must be > 0")?;
        check(self.rated_mva.is_finite() && self.rated_mva > 0.0, "rated_mva must be > 0")?;
        check(self.damping_d.is_finite() && self.damping_d >= 0.0, "damping_d must be >= 0")?;
        check(self.nominal_freq.is_finite() && self.nominal_freq > 0.0, "nominal_freq must be > 0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub id: u32,
    /// Zero-load buses are pure network nodes and get eliminated.
    #[serde(default)]
    pub nominal_load_mw: f64,
    #[serde(default)]
    pub attached_generators: Vec<u32>,
}

/// A series reactance between two nodes. Node names are `g<id>` for a
/// generator internal node and `b<id>` for a network bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub from: String,
    pub to: String,
    /// Series reactance, pu on the system base.
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitGrid {
    pub name: String,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(default = "default_trip")]
    pub trip_threshold_pu: f64,
    pub generators: Vec<GeneratorParams>,
    pub buses: Vec<BusSpec>,
    pub branches: Vec<BranchSpec>,
}

fn default_base_mva() -> f64 {
    100.0
}

fn default_trip() -> f64 {
    0.05
}

/// Either a built-in topology name or a fully explicit parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Builtin { topology: String },
    Explicit(ExplicitGrid),
}

impl GridConfig {
    pub fn builtin(name: &str) -> Self {
        GridConfig::Builtin { topology: name.to_string() }
    }

    pub fn from_toml(text: &str) -> Result<Self, GridError> {
        toml::from_str(text).map_err(|e| GridError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, GridError> {
        toml::to_string(self).map_err(|e| GridError::Config(e.to_string()))
    }

    /// Expands a built-in name into its full parameter set.
    pub fn resolve(&self) -> Result<ExplicitGrid, GridError> {
        match self {
            GridConfig::Builtin { topology } => builtin_topology(topology),
            GridConfig::Explicit(g) => Ok(g.clone()),
        }
    }
}

pub const BUILTIN_TOPOLOGIES: &[&str] = &["wscc9", "ne39-reduced"];

pub(crate) fn builtin_topology(name: &str) -> Result<ExplicitGrid, GridError> {
    match name {
        "wscc9" => Ok(wscc9()),
        "ne39-reduced" => Ok(ne39_reduced()),
        other => Err(GridError::UnknownTopology(other.to_string())),
    }
}

/// Droop of the slack machine in the built-in grids; the others use 5%.
pub const SLACK_DROOP: f64 = 0.005;

fn gen(id: u32, h: f64, d: f64, r: f64, t: f64, mva: f64) -> GeneratorParams {
    GeneratorParams {
        id,
        inertia_h: h,
        damping_d: d,
        droop_r: r,
        governor_t: t,
        rated_mva: mva,
        nominal_freq: 60.0,
    }
}

fn branch(from: &str, to: &str, x: f64) -> BranchSpec {
    BranchSpec { from: from.to_string(), to: to.to_string(), x }
}

fn bus(id: u32, load: f64, gens: &[u32]) -> BusSpec {
    BusSpec { id, nominal_load_mw: load, attached_generators: gens.to_vec() }
}

/// WSCC 3-machine 9-bus system. Inertia values are the classical
/// 23.64 / 6.40 / 3.01 s (100 MVA base) restated on machine base;
/// reactances are the standard transient, transformer and line data.
/// Machine 1 is the slack unit and regulates nearly isochronously.
fn wscc9() -> ExplicitGrid {
    ExplicitGrid {
        name: "wscc9".into(),
        base_mva: 100.0,
        trip_threshold_pu: 0.05,
        generators: vec![
            gen(1, 23.64 * 100.0 / 247.5, 2.0, SLACK_DROOP, 0.3, 247.5),
            gen(2, 6.40 * 100.0 / 192.0, 2.0, 0.05, 0.3, 192.0),
            gen(3, 3.01 * 100.0 / 128.0, 2.0, 0.05, 0.3, 128.0),
        ],
        buses: vec![
            bus(1, 0.0, &[1]),
            bus(2, 0.0, &[2]),
            bus(3, 0.0, &[3]),
            bus(4, 0.0, &[]),
            bus(5, 125.0, &[]),
            bus(6, 90.0, &[]),
            bus(7, 0.0, &[]),
            bus(8, 100.0, &[]),
            bus(9, 0.0, &[]),
        ],
        branches: vec![
            branch("g1", "b1", 0.0608),
            branch("g2", "b2", 0.1198),
            branch("g3", "b3", 0.1813),
            branch("b1", "b4", 0.0576),
            branch("b2", "b7", 0.0625),
            branch("b3", "b9", 0.0586),
            branch("b4", "b5", 0.085),
            branch("b4", "b6", 0.092),
            branch("b5", "b7", 0.161),
            branch("b6", "b9", 0.17),
            branch("b7", "b8", 0.072),
            branch("b8", "b9", 0.1008),
        ],
    }
}

/// Ten-machine New England aggregate: one load area per machine, areas
/// tied in a ring with two cross ties. Machine inertias are the published
/// 100 MVA-base values restated on a 1000 MVA machine base; machine 1 is
/// the external-system equivalent.
fn ne39_reduced() -> ExplicitGrid {
    const H_SYS: [f64; 10] = [500.0, 30.3, 35.8, 28.6, 26.0, 34.8, 26.4, 24.3, 34.5, 42.0];
    const XD: [f64; 10] = [0.006, 0.0697, 0.0531, 0.0436, 0.132, 0.05, 0.049, 0.057, 0.057, 0.031];
    const LOAD: [f64; 10] = [1104.0, 650.0, 580.0, 620.0, 480.0, 560.0, 520.0, 600.0, 470.0, 510.0];
    let generators = (0..10)
        .map(|i| {
            let r = if i == 0 { SLACK_DROOP } else { 0.05 };
            gen(i as u32 + 1, H_SYS[i] * 100.0 / 1000.0, 2.0, r, 0.3, 1000.0)
        })
        .collect();
    let buses = (0..10).map(|i| bus(i as u32 + 1, LOAD[i], &[i as u32 + 1])).collect();
    let mut branches: Vec<BranchSpec> = (0..10)
        .map(|i| branch(&format!("g{}", i + 1), &format!("b{}", i + 1), XD[i] + 0.015))
        .collect();
    for (a, b, x) in [
        (1, 10, 0.025),
        (10, 2, 0.02),
        (2, 3, 0.02),
        (3, 4, 0.025),
        (4, 5, 0.02),
        (5, 6, 0.02),
        (6, 7, 0.025),
        (7, 8, 0.02),
        (8, 9, 0.03),
        (9, 1, 0.03),
        (3, 6, 0.03),
        (2, 8, 0.035),
    ] {
        branches.push(branch(&format!("b{a}"), &format!("b{b}"), x));
    }
    ExplicitGrid {
        name: "ne39-reduced".into(),
        base_mva: 100.0,
        trip_threshold_pu: 0.05,
        generators,
        buses,
        branches,
    }
}
