use rand::seq::SliceRandom;

use super::{Dataset, DatasetError, NormBounds};
use crate::rng::Rng;

/// Stratified train/test split by label. Bounds are refit on the train
/// part and shared by both halves.
pub fn split(dataset: &Dataset, train_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::TooFewSamples(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for label in [0u8, 1] {
        let mut idx: Vec<usize> =
            dataset.samples.iter().enumerate().filter(|(_, s)| s.label == label).map(|(i, _)| i).collect();
        if idx.is_empty() {
            continue;
        }
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        if n_train == 0 || n_train == idx.len() {
            return Err(DatasetError::TooFewSamples(format!(
                "{} samples with label {label} cannot fill both parts",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }
    if train_idx.is_empty() {
        return Err(DatasetError::TooFewSamples("empty dataset".into()));
    }
    train_idx.shuffle(rng);
    test_idx.shuffle(rng);
    let take = |idx: &[usize]| idx.iter().map(|&i| dataset.samples[i].clone()).collect::<Vec<_>>();
    let train_samples = take(&train_idx);
    let bounds = NormBounds::fit(&train_samples)?;
    Ok((
        Dataset { samples: train_samples, bounds, regime: dataset.regime },
        Dataset { samples: take(&test_idx), bounds, regime: dataset.regime },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{RawSample, Regime, SampleMeta, ScenarioClass};
    use crate::rng::rng_from_seed;

    pub(crate) fn toy(n: usize) -> Dataset {
        let samples: Vec<RawSample> = (0..n)
            .map(|i| RawSample {
                meta: SampleMeta { scenario_id: i as u64, station_id: 1, bus_id: 5, t_end: 140.0, regime: Regime::Attack5 },
                label: (i % 2) as u8,
                class: if i % 2 == 1 { ScenarioClass::FastSwitchingAttack } else { ScenarioClass::SlowNormalFreq },
                event_codes: vec![0; 240],
                freq_hz: vec![60.0 + (i as f64) * 1e-3; 240],
            })
            .collect();
        let bounds = NormBounds::fit(&samples).unwrap();
        Dataset { samples, bounds, regime: Regime::Attack5 }
    }

    #[test]
    fn sizes_and_balance() {
        let ds = toy(2000);
        let (tr, te) = split(&ds, 0.8, &mut rng_from_seed(1)).unwrap();
        assert_eq!((tr.len(), te.len()), (1600, 400));
        assert_eq!(tr.label_counts(), (800, 800));
        assert_eq!(te.label_counts(), (200, 200));
        let mut ids: Vec<u64> = tr.samples.iter().chain(&te.samples).map(|s| s.meta.scenario_id).collect();
        ids.sort();
        assert_eq!(ids, (0..2000).collect::<Vec<_>>());
    }

    #[test]
    fn bounds_from_train_only() {
        let ds = toy(40);
        let (tr, te) = split(&ds, 0.75, &mut rng_from_seed(9)).unwrap();
        assert_eq!(tr.bounds, te.bounds);
        assert_eq!(tr.bounds, NormBounds::fit(&tr.samples).unwrap());
    }

    #[test]
    fn too_few() {
        let ds = toy(2);
        assert!(matches!(split(&ds, 0.8, &mut rng_from_seed(1)), Err(DatasetError::TooFewSamples(_))));
        assert!(split(&toy(10), 1.0, &mut rng_from_seed(1)).is_err());
    }
}
