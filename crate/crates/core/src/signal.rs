//! Small signal-analysis helpers shared by tests, acceptance checks and the
//! mitigation report.

use std::f64::consts::PI;

pub fn peak_to_peak(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    hi - lo
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Power of the mean-removed signal at an arbitrary frequency (Hz), i.e.
/// the squared magnitude of the single-frequency DFT sum normalized by the
/// sample count.
pub fn power_at(x: &[f64], sample_interval: f64, freq_hz: f64) -> f64 {
    let m = mean(x);
    let (mut re, mut im) = (0.0, 0.0);
    for (n, v) in x.iter().enumerate() {
        let ph = 2.0 * PI * freq_hz * n as f64 * sample_interval;
        re += (v - m) * ph.cos();
        im -= (v - m) * ph.sin();
    }
    (re * re + im * im) / x.len() as f64
}

/// Index of the strongest non-DC DFT bin of the mean-removed signal and the
/// bin width (Hz).
pub fn dominant_bin(x: &[f64], sample_interval: f64) -> (usize, f64) {
    let n = x.len();
    let width = 1.0 / (n as f64 * sample_interval);
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..=n / 2 {
        let p = power_at(x, sample_interval, k as f64 * width);
        if p > best.1 {
            best = (k, p);
        }
    }
    (best.0, width)
}

/// Frequency (Hz) of the strongest non-DC DFT bin.
pub fn dominant_frequency(x: &[f64], sample_interval: f64) -> f64 {
    let (k, w) = dominant_bin(x, sample_interval);
    k as f64 * w
}
