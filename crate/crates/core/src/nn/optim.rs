use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias correction; moments are kept per trainable tensor in
/// the order the tensors are passed.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Adam::default()
    }

    pub fn update<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Param>, cfg: &AdamConfig) -> Result<(), NnError> {
        let params: Vec<&mut Param> = params.into_iter().filter(|p| p.trainable).collect();
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(&params).any(|(m, p)| m.len() != p.len()) {
            return Err(NnError::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.value[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Param {
        let mut p = Param::zeros("x", vec![1]);
        p.value[0] = x;
        p
    }

    #[test]
    fn first_step_is_signed_lr() {
        let cfg = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        for g in [3.0, -0.2, 1e-3] {
            let mut p = scalar(1.0);
            p.grad[0] = g;
            Adam::new().update([&mut p], &cfg).unwrap();
            assert!((p.value[0] - (1.0 - 0.01 * g.signum())).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = scalar(0.7);
        let mut a = Adam::new();
        for _ in 0..50 {
            a.update([&mut p], &AdamConfig::default()).unwrap();
        }
        assert_eq!(p.value[0], 0.7);
    }

    #[test]
    fn quadratic_converges() {
        let cfg = AdamConfig { learning_rate: 0.1, ..AdamConfig::default() };
        let mut p = scalar(1.0);
        let mut a = Adam::new();
        // Hand-rolled reference iteration.
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            p.grad[0] = 2.0 * p.value[0];
            a.update([&mut p], &cfg).unwrap();
            let g = 2.0 * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            x -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert!((p.value[0] - x).abs() < 1e-12);
        assert!(x.abs() < 0.02, "{x}");
    }
}
