use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::model::{bce_loss, Model};
use super::optim::{Adam, AdamConfig};
use super::spec::{ArchFamily, Hyperparams, LayerSpec, NetworkSpec};
use super::tensor::Tensor;
use super::NnError;
use crate::dataset::Dataset;
use crate::fleet::WINDOW_TICKS;
use crate::rng::{derive_seed, rng_from_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Overrides every dropout layer's rate when set.
    pub dropout_rate: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn from_hyperparams(h: &Hyperparams, seed: u64) -> Self {
        TrainConfig {
            learning_rate: h.learning_rate,
            dropout_rate: Some(h.dropout),
            batch_size: h.batch_size,
            epochs: h.epochs,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::Config("learning rate must be positive".into()));
        }
        if self.dropout_rate.is_some_and(|d| !(0.0..1.0).contains(&d)) {
            return Err(NnError::Config("dropout must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NnError::Config("batch size and epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(NnError::Config("adam betas in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }
}

/// Normalized windows of a dataset as one flat `[n, 240, 2]` buffer.
pub struct Matrix {
    pub data: Vec<f64>,
    pub labels: Vec<f64>,
}

const SAMPLE: usize = 2 * WINDOW_TICKS;
const CALIBRATION_BATCH: usize = 64;

impl Matrix {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let mut data = Vec::with_capacity(ds.len() * SAMPLE);
        for i in 0..ds.len() {
            data.extend(ds.window(i).as_matrix());
        }
        Matrix { data, labels: ds.samples.iter().map(|s| s.label as f64).collect() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> (Tensor, Vec<f64>) {
        let mut d = Vec::with_capacity(idx.len() * SAMPLE);
        for &i in idx {
            d.extend_from_slice(&self.data[i * SAMPLE..(i + 1) * SAMPLE]);
        }
        let t = Tensor::new(vec![idx.len(), WINDOW_TICKS, 2], d).expect("sizes match");
        (t, idx.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
    /// Wall clock; excluded from reproducible artifacts.
    pub training_time_s: f64,
}

pub struct Trained {
    pub model: Model,
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
}

fn with_dropout(spec: &NetworkSpec, rate: Option<f64>) -> NetworkSpec {
    let mut s = spec.clone();
    if let Some(r) = rate {
        for l in &mut s.layers {
            if let LayerSpec::Dropout { rate } = l {
                *rate = r;
            }
        }
    }
    s
}

/// Mini-batch Adam on shuffled batches; deterministic per `cfg.seed`.
pub fn train(spec: &NetworkSpec, data: &Dataset, cfg: &TrainConfig) -> Result<Trained, NnError> {
    train_with(spec, data, cfg, None, None)
}

/// [`train`] with optional family and hyperparameters recorded in the
/// checkpoint metadata.
pub fn train_with(
    spec: &NetworkSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    family: Option<ArchFamily>,
    hyper: Option<Hyperparams>,
) -> Result<Trained, NnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::Config("training set is empty".into()));
    }
    let spec = with_dropout(spec, cfg.dropout_rate);
    let t0 = Instant::now();
    let mut model = Model::new(spec, derive_seed(cfg.seed, Stream::Train, 0))?;
    let mut order_rng = rng_from_seed(derive_seed(cfg.seed, Stream::Train, 1));
    let mut drop_rng = rng_from_seed(derive_seed(cfg.seed, Stream::Train, 2));
    let m = Matrix::from_dataset(data);
    let mut adam = Adam::new();
    let opt = cfg.adam();
    let mut idx: Vec<usize> = (0..m.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut order_rng);
        let mut total = 0.0;
        for chunk in idx.chunks(cfg.batch_size) {
            let (x, y) = m.batch(chunk);
            let p = model.forward(&x, &mut Model::train_ctx(&mut drop_rng))?;
            let loss = bce_loss(&p, &y)?;
            if !loss.is_finite() || p.iter().any(|v| !v.is_finite()) {
                return Err(NnError::Divergence { epoch: epoch + 1 });
            }
            total += loss * chunk.len() as f64;
            model.zero_grads();
            model.backward(&p, &y)?;
            adam.update(model.named_params_mut().into_iter().map(|(_, p)| p), &opt)?;
        }
        let mean = total / m.len() as f64;
        if !mean.is_finite() {
            return Err(NnError::Divergence { epoch: epoch + 1 });
        }
        history.push(mean);
    }
    // Running statistics were gathered under dropout; refit them on clean
    // activations of the final weights.
    let calib: Vec<Tensor> = idx.chunks(CALIBRATION_BATCH).map(|c| m.batch(c).0).collect();
    model.recalibrate(&calib)?;
    let meta = CheckpointMeta {
        family,
        hyperparams: hyper,
        epochs: cfg.epochs,
        seed: cfg.seed,
        final_loss: *history.last().expect("epochs >= 1"),
        loss_history: history.clone(),
        norm_bounds: Some(data.bounds),
        regime: Some(data.regime),
    };
    let checkpoint = Checkpoint::from_model(&model, meta);
    Ok(Trained {
        model,
        checkpoint,
        history: TrainHistory { epoch_loss: history, training_time_s: t0.elapsed().as_secs_f64() },
    })
}

/// Trains the family's network built from `h`.
pub fn train_hyper(family: ArchFamily, h: &Hyperparams, data: &Dataset, seed: u64) -> Result<Trained, NnError> {
    h.validate(family)?;
    train_with(&h.spec(family), data, &TrainConfig::from_hyperparams(h, seed), Some(family), Some(*h))
}

/// Inference probabilities over a whole dataset, using its stored bounds.
pub fn predict_dataset(model: &mut Model, data: &Dataset, batch: usize) -> Result<Vec<f64>, NnError> {
    let m = Matrix::from_dataset(data);
    predict_matrix(model, &m, batch)
}

pub fn predict_matrix(model: &mut Model, m: &Matrix, batch: usize) -> Result<Vec<f64>, NnError> {
    let idx: Vec<usize> = (0..m.len()).collect();
    let mut out = Vec::with_capacity(m.len());
    for chunk in idx.chunks(batch.max(1)) {
        out.extend(model.predict_batch(&m.batch(chunk).0)?);
    }
    Ok(out)
}
