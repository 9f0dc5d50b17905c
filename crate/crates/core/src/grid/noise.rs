//! Benign consumer load variation.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sim::{GridView, LoadProfile};
use super::{GridError, GridModel};
use crate::rng::Rng;

/// Power factor of the benign random load blocks (lagging).
pub const BENIGN_POWER_FACTOR: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDist {
    Gaussian,
    Uniform,
}

/// One random load draw. Reactive power at the fixed lagging power factor
/// is carried for completeness; the DC network model ignores it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub p_mw: f64,
    pub q_mvar: f64,
}

pub fn random_load_perturbation(
    rng: &mut Rng,
    nominal_mw: f64,
    cap_fraction: f64,
    dist: NoiseDist,
) -> Result<Perturbation, GridError> {
    if !(0.0..=0.1).contains(&cap_fraction) {
        return Err(GridError::Precondition(format!("cap_fraction {cap_fraction} outside [0, 0.1]")));
    }
    let cap = cap_fraction * nominal_mw.abs();
    let p_mw = if cap == 0.0 {
        0.0
    } else {
        match dist {
            NoiseDist::Uniform => rng.random_range(-cap..=cap),
            NoiseDist::Gaussian => {
                // Three sigma at the cap, redrawn beyond it.
                let normal = Normal::new(0.0, cap / 3.0).expect("positive sigma");
                loop {
                    let v: f64 = normal.sample(rng);
                    if v.abs() <= cap {
                        break v;
                    }
                }
            }
        }
    };
    let tan_phi = (1.0 - BENIGN_POWER_FACTOR * BENIGN_POWER_FACTOR).sqrt() / BENIGN_POWER_FACTOR;
    Ok(Perturbation { p_mw, q_mvar: p_mw * tan_phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub cap_fraction: f64,
    pub dist: NoiseDist,
    /// Each bus redraws its perturbation this often and holds it.
    pub hold_s: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { cap_fraction: 0.02, dist: NoiseDist::Gaussian, hold_s: DEFAULT_NOISE_HOLD_S }
    }
}

pub const DEFAULT_NOISE_HOLD_S: f64 = 0.01;

/// Sample-and-hold random load on every load bus, scaled by each bus's
/// nominal load.
pub struct BenignNoise {
    cfg: NoiseConfig,
    nominal: Vec<f64>,
    rng: Rng,
    current: Vec<f64>,
    reactive: Vec<f64>,
    next_draw: f64,
}

impl BenignNoise {
    pub fn new(model: &GridModel, cfg: NoiseConfig, rng: Rng) -> Result<Self, GridError> {
        if !(0.0..=0.1).contains(&cfg.cap_fraction) {
            return Err(GridError::Precondition(format!(
                "cap_fraction {} outside [0, 0.1]",
                cfg.cap_fraction
            )));
        }
        if !(cfg.hold_s > 0.0) {
            return Err(GridError::Precondition("noise hold must be > 0".into()));
        }
        let nominal: Vec<f64> = model.buses.iter().map(|b| b.nominal_load_mw).collect();
        let n = nominal.len();
        Ok(BenignNoise {
            cfg,
            nominal,
            rng,
            current: vec![0.0; n],
            reactive: vec![0.0; n],
            next_draw: f64::NEG_INFINITY,
        })
    }

    /// Reactive power (MVAr) of the current draw on each bus.
    pub fn reactive_mvar(&self) -> &[f64] {
        &self.reactive
    }
}

impl LoadProfile for BenignNoise {
    fn load_mw(&mut self, t: f64, _grid: &GridView<'_>, out: &mut [f64]) {
        if t + 1e-9 >= self.next_draw {
            for (i, nominal) in self.nominal.iter().enumerate() {
                let p = random_load_perturbation(&mut self.rng, *nominal, self.cfg.cap_fraction, self.cfg.dist)
                    .expect("cap validated at construction");
                self.current[i] = p.p_mw;
                self.reactive[i] = p.q_mvar;
            }
            self.next_draw = if self.next_draw.is_finite() {
                self.next_draw + self.cfg.hold_s
            } else {
                t + self.cfg.hold_s
            };
        }
        out.copy_from_slice(&self.current);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_cap_is_zero() {
        let mut rng = rng_from_seed(1);
        for dist in [NoiseDist::Gaussian, NoiseDist::Uniform] {
            for _ in 0..100 {
                let p = random_load_perturbation(&mut rng, 100.0, 0.0, dist).unwrap();
                assert_eq!(p.p_mw, 0.0);
            }
        }
    }

    #[test]
    fn uniform_bounded() {
        let mut rng = rng_from_seed(2);
        for _ in 0..10_000 {
            let p = random_load_perturbation(&mut rng, 100.0, 0.02, NoiseDist::Uniform).unwrap();
            assert!((-2.0..=2.0).contains(&p.p_mw));
            assert!((p.q_mvar - 0.75 * p.p_mw).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_truncated_at_cap() {
        let mut rng = rng_from_seed(3);
        for _ in 0..10_000 {
            let p = random_load_perturbation(&mut rng, 50.0, 0.1, NoiseDist::Gaussian).unwrap();
            assert!(p.p_mw.abs() <= 5.0);
        }
    }

    #[test]
    fn gaussian_golden_value() {
        let mut rng = rng_from_seed(42);
        let p = random_load_perturbation(&mut rng, 100.0, 0.02, NoiseDist::Gaussian).unwrap();
        // Captured once from the seeded generator.
        assert_eq!(p.p_mw.to_bits(), GOLDEN_GAUSSIAN_SEED42.to_bits(), "got {:e}", p.p_mw);
    }

    const GOLDEN_GAUSSIAN_SEED42: f64 = 0.318_654_158_900_681_16;

    #[test]
    fn cap_out_of_range() {
        let mut rng = rng_from_seed(4);
        assert!(random_load_perturbation(&mut rng, 100.0, 0.2, NoiseDist::Uniform).is_err());
        assert!(random_load_perturbation(&mut rng, 100.0, -0.01, NoiseDist::Uniform).is_err());
    }
}
