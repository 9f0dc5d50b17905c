use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::nn::{Matrix, Model, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(probs: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (p, y) in probs.iter().zip(labels) {
            match (*p >= threshold, *y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Scores in percent, plus timing kept apart from the reproducible part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub confusion: Confusion,
    pub training_time_s: f64,
    pub mean_prediction_time_s: f64,
}

impl Metrics {
    /// Ratios with an empty denominator are reported as 0.
    pub fn from_confusion(c: Confusion) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f_measure =
            if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Metrics {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision,
            recall,
            f_measure,
            confusion: c,
            training_time_s: 0.0,
            mean_prediction_time_s: 0.0,
        }
    }

    /// Share of attack windows classified as normal, in percent.
    pub fn fn_rate(&self) -> f64 {
        let pos = self.confusion.tp + self.confusion.fn_;
        if pos == 0 {
            0.0
        } else {
            100.0 * self.confusion.fn_ as f64 / pos as f64
        }
    }
}

const EVAL_BATCH: usize = 64;

/// Scores `model` on `test` at `threshold`; prediction time is the batched
/// wall clock divided by the number of samples.
pub fn evaluate(model: &mut Model, test: &Dataset, threshold: f64) -> Result<(Metrics, Vec<f64>), NnError> {
    if test.is_empty() {
        return Err(NnError::Config("test set is empty".into()));
    }
    let m = Matrix::from_dataset(test);
    let batches: Vec<Tensor> =
        (0..m.len()).collect::<Vec<_>>().chunks(EVAL_BATCH).map(|c| m.batch(c).0).collect();
    let t0 = Instant::now();
    let mut probs = Vec::with_capacity(m.len());
    for b in &batches {
        probs.extend(model.predict_batch(b)?);
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let mut metrics = Metrics::from_confusion(Confusion::from_predictions(&probs, &test.labels(), threshold));
    metrics.mean_prediction_time_s = elapsed / m.len() as f64;
    Ok((metrics, probs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// `None` when the probe holds no attack windows.
    pub recall: Option<f64>,
    pub attacks: u64,
    pub detected: u64,
    pub normals: u64,
    pub false_positives: u64,
    pub fp_rate: Option<f64>,
}

/// Runs a trained model, unchanged, on windows that show only the very
/// start of each attack.
pub fn early_detection_probe(model: &mut Model, probe: &Dataset, threshold: f64) -> Result<ProbeResult, NnError> {
    let (m, _) = evaluate(model, probe, threshold)?;
    let c = m.confusion;
    let attacks = c.tp + c.fn_;
    let normals = c.tn + c.fp;
    Ok(ProbeResult {
        recall: (attacks > 0).then(|| 100.0 * c.tp as f64 / attacks as f64),
        attacks,
        detected: c.tp,
        normals,
        false_positives: c.fp,
        fp_rate: (normals > 0).then(|| 100.0 * c.fp as f64 / normals as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let c = Confusion { tp: 10, fp: 0, tn: 7, fn_: 0 };
        let m = Metrics::from_confusion(c);
        assert_eq!((m.accuracy, m.f_measure, m.fn_rate()), (100.0, 100.0, 0.0));
    }

    #[test]
    fn empty_denominators() {
        let m = Metrics::from_confusion(Confusion { tp: 0, fp: 0, tn: 5, fn_: 0 });
        assert_eq!((m.precision, m.recall, m.f_measure), (0.0, 0.0, 0.0));
        assert_eq!(m.accuracy, 100.0);
    }

    #[test]
    fn threshold_is_inclusive() {
        let c = Confusion::from_predictions(&[0.5, 0.7, 0.2, 0.49], &[1, 0, 0, 1], 0.5);
        assert_eq!(c, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
    }
}
