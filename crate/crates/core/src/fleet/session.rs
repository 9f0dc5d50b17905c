use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::FleetError;
use crate::rng::Rng;

/// Relative arrival intensity per hour of day with morning and evening
/// peaks. Mean is 1 so a scaled table keeps the nominal daily count.
pub const DEFAULT_HOURLY_PROFILE: [f64; 24] = [
    0.25, 0.2, 0.15, 0.15, 0.2, 0.4, 0.9, 1.6, 2.0, 1.6, 1.1, 1.0, //
    1.0, 1.0, 1.0, 1.1, 1.4, 1.8, 2.0, 1.7, 1.2, 0.8, 0.5, 0.35,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionParams {
    /// Mean arrivals per hour.
    pub arrival_rate_lambda: f64,
    /// Optional per-hour multipliers (24 entries) applied to the base rate.
    #[serde(default)]
    pub hourly_profile: Option<Vec<f64>>,
    pub duration_mean: f64,
    pub duration_std: f64,
    pub duration_min: f64,
    pub duration_max: f64,
    pub charge_rate_kw: f64,
}

impl SessionParams {
    /// Long sessions, at least 55 s, averaging 24 minutes.
    pub fn heavy_use() -> Self {
        SessionParams {
            arrival_rate_lambda: 2.0,
            hourly_profile: None,
            duration_mean: 1440.0,
            duration_std: 600.0,
            duration_min: 55.0,
            duration_max: 7200.0,
            charge_rate_kw: 11.0,
        }
    }

    /// Short sessions, at least 26 s, averaging 8 minutes.
    pub fn light_switchy() -> Self {
        SessionParams {
            arrival_rate_lambda: 2.0,
            hourly_profile: None,
            duration_mean: 480.0,
            duration_std: 300.0,
            duration_min: 26.0,
            duration_max: 3600.0,
            charge_rate_kw: 11.0,
        }
    }

    pub fn with_rate(mut self, lambda_per_hour: f64) -> Self {
        self.arrival_rate_lambda = lambda_per_hour;
        self
    }

    pub fn validate(&self) -> Result<(), FleetError> {
        let bad = |m: &str| Err(FleetError::InvalidParams(m.to_string()));
        if !(self.arrival_rate_lambda.is_finite() && self.arrival_rate_lambda >= 0.0) {
            return bad("arrival_rate_lambda must be >= 0");
        }
        if !(self.duration_min <= self.duration_mean && self.duration_mean <= self.duration_max) {
            return bad("need duration_min <= duration_mean <= duration_max");
        }
        if !(self.duration_min >= 0.0 && self.duration_max.is_finite()) {
            return bad("duration bounds must be finite and non-negative");
        }
        if !(self.duration_std > 0.0) {
            return bad("duration_std must be > 0");
        }
        if !(self.charge_rate_kw > 0.0 && self.charge_rate_kw.is_finite()) {
            return bad("charge_rate_kw must be > 0");
        }
        if let Some(p) = &self.hourly_profile {
            if p.len() != 24 || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("hourly_profile needs 24 non-negative entries");
            }
        }
        Ok(())
    }

    /// Arrival rate (per hour) in force at absolute time `t` seconds,
    /// where t = 0 is midnight.
    pub fn rate_at(&self, t: f64) -> f64 {
        match &self.hourly_profile {
            None => self.arrival_rate_lambda,
            Some(p) => {
                let hour = (t / 3600.0).rem_euclid(24.0) as usize;
                self.arrival_rate_lambda * p[hour.min(23)]
            }
        }
    }

    fn peak_rate(&self) -> f64 {
        match &self.hourly_profile {
            None => self.arrival_rate_lambda,
            Some(p) => self.arrival_rate_lambda * p.iter().cloned().fold(0.0, f64::max),
        }
    }
}

/// Homogeneous Poisson arrivals on `[0, horizon)`, returned sorted.
pub fn sample_arrivals(rng: &mut Rng, lambda_per_hour: f64, horizon: f64) -> Vec<f64> {
    if !(lambda_per_hour > 0.0) || !(horizon > 0.0) {
        return Vec::new();
    }
    let exp = Exp::new(lambda_per_hour / 3600.0).expect("positive rate");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t >= horizon {
            return out;
        }
        out.push(t);
    }
}

/// Arrivals on `[start, start + horizon)` following the time-of-day
/// table, by thinning a process at the peak rate.
pub fn sample_arrivals_tod(rng: &mut Rng, params: &SessionParams, start: f64, horizon: f64) -> Vec<f64> {
    let peak = params.peak_rate();
    if peak <= 0.0 {
        return Vec::new();
    }
    sample_arrivals(rng, peak, horizon)
        .into_iter()
        .map(|t| start + t)
        .filter(|t| {
            let keep: f64 = rng.random();
            keep * peak < params.rate_at(*t)
        })
        .collect()
}

/// Truncated Gaussian session length by rejection.
pub fn sample_duration(rng: &mut Rng, params: &SessionParams) -> f64 {
    if params.duration_min >= params.duration_max {
        return params.duration_min;
    }
    let normal = Normal::new(params.duration_mean, params.duration_std).expect("std > 0");
    for _ in 0..10_000 {
        let v = normal.sample(rng);
        if v >= params.duration_min && v <= params.duration_max {
            return v;
        }
    }
    // Bounds far out in a tail: fall back to uniform on the interval.
    rng.random_range(params.duration_min..=params.duration_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_rate_is_empty() {
        let mut rng = rng_from_seed(1);
        assert!(sample_arrivals(&mut rng, 0.0, 3600.0).is_empty());
    }

    #[test]
    fn arrivals_sorted_and_in_range() {
        let mut rng = rng_from_seed(2);
        let a = sample_arrivals(&mut rng, 120.0, 3600.0);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a.iter().all(|t| (0.0..3600.0).contains(t)));
    }

    #[test]
    fn degenerate_duration() {
        let mut rng = rng_from_seed(3);
        let p = SessionParams {
            duration_mean: 100.0,
            duration_min: 100.0,
            duration_max: 100.0,
            ..SessionParams::heavy_use()
        };
        assert_eq!(sample_duration(&mut rng, &p), 100.0);
    }

    #[test]
    fn defaults_valid() {
        SessionParams::heavy_use().validate().unwrap();
        SessionParams::light_switchy().validate().unwrap();
        let mut p = SessionParams::heavy_use();
        p.duration_std = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn time_of_day_profile_thins() {
        let mut p = SessionParams::heavy_use().with_rate(60.0);
        p.hourly_profile = Some(DEFAULT_HOURLY_PROFILE.to_vec());
        let mut rng = rng_from_seed(4);
        let night = sample_arrivals_tod(&mut rng, &p, 2.0 * 3600.0, 3600.0).len();
        let morning = sample_arrivals_tod(&mut rng, &p, 8.0 * 3600.0, 3600.0).len();
        assert!(morning > night);
    }
}
