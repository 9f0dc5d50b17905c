use std::time::Instant;

use super::layers::{Ctx, Layer, Mode, Param};
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use super::NnError;
use crate::dataset::WindowSample;
use crate::fleet::WINDOW_TICKS;
use crate::rng::{rng_from_seed, Rng};

pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Mean binary cross-entropy with probabilities clamped away from 0 and 1.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> Result<f64, NnError> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(NnError::Shape(format!("{} probabilities vs {} labels", probs.len(), labels.len())));
    }
    let s: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(s / probs.len() as f64)
}

/// A built network: the spec plus live layers.
pub struct Model {
    pub spec: NetworkSpec,
    layers: Vec<Box<dyn Layer>>,
    last_batch: Option<usize>,
}

impl Model {
    pub fn new(spec: NetworkSpec, init_seed: u64) -> Result<Self, NnError> {
        let layers = spec.build(&mut rng_from_seed(init_seed))?;
        Ok(Model { spec, layers, last_batch: None })
    }

    pub fn layers(&self) -> &[Box<dyn Layer>] {
        &self.layers
    }

    /// Every tensor with its qualified name `<index>.<kind>.<name>`.
    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for p in l.params() {
                out.push((format!("{i}.{}.{}", l.kind(), p.name), p));
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            let kind = l.kind();
            for p in l.params_mut() {
                out.push((format!("{i}.{kind}.{}", p.name), p));
            }
        }
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.named_params().iter().filter(|(_, p)| p.trainable).map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Sigmoid outputs, one per sample of `x` (`[batch, sample...]`).
    pub fn forward(&mut self, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<Vec<f64>, NnError> {
        if x.sample_shape() != self.spec.input_shape.as_slice() {
            return Err(NnError::Shape(format!(
                "input {:?} does not match network input {:?}",
                x.sample_shape(),
                self.spec.input_shape
            )));
        }
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, ctx)?;
        }
        self.last_batch = (ctx.mode == Mode::Train).then_some(x.batch());
        Ok(h.data)
    }

    /// Accumulates gradients of the mean BCE loss for the batch of the last
    /// training forward pass.
    pub fn backward(&mut self, probs: &[f64], labels: &[f64]) -> Result<(), NnError> {
        let b = self.last_batch.take().ok_or(NnError::StaleCache("model"))?;
        if probs.len() != b || labels.len() != b {
            return Err(NnError::Shape("labels do not match the cached batch".into()));
        }
        let dz: Vec<f64> = probs.iter().zip(labels).map(|(p, y)| (p - y) / b as f64).collect();
        let mut g = Tensor::new(vec![b, 1], dz)?;
        let n = self.layers.len();
        g = self.layers[n - 1].backward_from_logits(&g)?;
        for l in self.layers[..n - 1].iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(())
    }

    pub fn predict_batch(&mut self, x: &Tensor) -> Result<Vec<f64>, NnError> {
        self.forward(x, &mut Ctx::infer())
    }

    /// Inference on one window with its wall-clock latency in milliseconds.
    pub fn predict(&mut self, window: &WindowSample) -> Result<(f64, f64), NnError> {
        let t0 = Instant::now();
        let x = windows_to_tensor(std::slice::from_ref(window))?;
        let p = self.predict_batch(&x)?[0];
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        Ok((p, ms.max(f64::MIN_POSITIVE)))
    }

    /// Replaces batch-norm running statistics by population statistics of
    /// `batches`, computed with dropout off.
    pub fn recalibrate<'a>(&mut self, batches: impl IntoIterator<Item = &'a Tensor>) -> Result<(), NnError> {
        for l in &mut self.layers {
            l.begin_calibration();
        }
        let mut ctx = Ctx { mode: Mode::Calibrate, rng: None };
        for x in batches {
            self.forward(x, &mut ctx)?;
        }
        for l in &mut self.layers {
            l.end_calibration();
        }
        Ok(())
    }

    /// An independent copy with identical parameters and running statistics.
    pub fn duplicate(&self) -> Result<Model, NnError> {
        let mut m = Model::new(self.spec.clone(), 0)?;
        let src = self.named_params();
        for ((_, dst), (_, s)) in m.named_params_mut().into_iter().zip(src) {
            dst.value.copy_from_slice(&s.value);
        }
        Ok(m)
    }

    /// Shares a dropout stream across a training pass.
    pub fn train_ctx(rng: &mut Rng) -> Ctx<'_> {
        Ctx { mode: Mode::Train, rng: Some(rng) }
    }
}

/// Stacks windows into a `[batch, 240, 2]` tensor of (event, frequency) rows.
pub fn windows_to_tensor(windows: &[WindowSample]) -> Result<Tensor, NnError> {
    let mut data = Vec::with_capacity(windows.len() * 2 * WINDOW_TICKS);
    for w in windows {
        if w.events.len() != WINDOW_TICKS || w.frequency.len() != WINDOW_TICKS {
            return Err(NnError::Shape(format!("window must be {WINDOW_TICKS}x2")));
        }
        data.extend(w.as_matrix());
    }
    Tensor::new(vec![windows.len(), WINDOW_TICKS, 2], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchFamily, Hyperparams};

    #[test]
    fn bce_values() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() < 1e-6);
        let a = bce_loss(&[0.3], &[1.0]).unwrap();
        let b = bce_loss(&[0.7], &[0.0]).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(bce_loss(&[0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn zero_head_gives_one_half() {
        let spec = Hyperparams::desk(ArchFamily::Lstm).spec(ArchFamily::Lstm);
        let mut m = Model::new(spec, 3).unwrap();
        for (name, p) in m.named_params_mut() {
            if name.starts_with("8.") {
                p.value.fill(0.0);
            }
        }
        let x = Tensor::new(vec![2, 240, 2], (0..960).map(|i| (i % 7) as f64 * 0.1).collect()).unwrap();
        assert_eq!(m.predict_batch(&x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn final_bias_gradient_is_residual() {
        let spec = Hyperparams::desk(ArchFamily::Lstm).spec(ArchFamily::Lstm);
        let mut m = Model::new(spec, 3).unwrap();
        let x = Tensor::new(vec![1, 240, 2], (0..480).map(|i| (i % 5) as f64 * 0.2).collect()).unwrap();
        let mut rng = rng_from_seed(1);
        let p = m.forward(&x, &mut Model::train_ctx(&mut rng)).unwrap();
        m.zero_grads();
        m.backward(&p, &[1.0]).unwrap();
        let g = m.named_params().into_iter().find(|(n, _)| n == "8.dense.b").unwrap().1.grad[0];
        assert!((g - (p[0] - 1.0)).abs() < 1e-15);
        assert!(matches!(m.backward(&p, &[1.0]), Err(NnError::StaleCache(_))));
    }

    #[test]
    fn inference_is_deterministic() {
        let spec = Hyperparams::desk(ArchFamily::ConvLstm).spec(ArchFamily::ConvLstm);
        let mut m = Model::new(spec, 11).unwrap();
        let x = Tensor::new(vec![3, 240, 2], (0..1440).map(|i| ((i * 37) % 11) as f64 / 11.0).collect()).unwrap();
        let a = m.predict_batch(&x).unwrap();
        let b = m.predict_batch(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| *p > 0.0 && *p < 1.0));
        let mut d = m.duplicate().unwrap();
        assert_eq!(d.predict_batch(&x).unwrap(), a);
    }
}
