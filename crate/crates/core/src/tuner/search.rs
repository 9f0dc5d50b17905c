use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, Metrics};
use super::TunerError;
use crate::dataset::Dataset;
use crate::nn::{train_hyper, ArchFamily, Hyperparams, DEFAULT_THRESHOLD};
use crate::rng::{derive_seed, rng_from_seed, Rng, Stream};

/// Inclusive ranges for every tuned hyperparameter. The learning rate is
/// sampled log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rate: (f64, f64),
    pub dropout: (f64, f64),
    pub batch_size: (usize, usize),
    pub units: (usize, usize),
    pub epochs: (usize, usize),
    pub filters: (usize, usize),
    pub kernel: (usize, usize),
}

impl SearchSpace {
    /// Encloses every published optimum.
    pub fn paper() -> Self {
        SearchSpace {
            learning_rate: (1e-4, 2e-2),
            dropout: (0.1, 0.5),
            batch_size: (16, 64),
            units: (16, 200),
            epochs: (4, 8),
            filters: (2, 8),
            kernel: (3, 7),
        }
    }

    /// Narrow widths that keep a trial to seconds on one core.
    pub fn desk() -> Self {
        SearchSpace {
            learning_rate: (1e-3, 2e-2),
            dropout: (0.1, 0.5),
            batch_size: (16, 64),
            units: (4, 24),
            epochs: (4, 8),
            filters: (2, 6),
            kernel: (3, 5),
        }
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        let ok = 0.0 < self.learning_rate.0
            && self.learning_rate.0 <= self.learning_rate.1
            && 0.0 <= self.dropout.0
            && self.dropout.0 <= self.dropout.1
            && self.dropout.1 < 1.0
            && [self.batch_size, self.units, self.epochs, self.filters, self.kernel].iter().all(|(a, b)| 1 <= *a && a <= b);
        if ok {
            Ok(())
        } else {
            Err(TunerError::Space("every range must be non-empty and positive; dropout below 1".into()))
        }
    }

    pub fn contains(&self, h: &Hyperparams, family: ArchFamily) -> bool {
        let inr = |v: usize, r: (usize, usize)| r.0 <= v && v <= r.1;
        let common = self.learning_rate.0 <= h.learning_rate
            && h.learning_rate <= self.learning_rate.1
            && self.dropout.0 <= h.dropout
            && h.dropout <= self.dropout.1
            && inr(h.batch_size, self.batch_size)
            && inr(h.epochs, self.epochs)
            && inr(h.units1, self.units)
            && inr(h.units2, self.units);
        match family {
            ArchFamily::Lstm => common && inr(h.units3, self.units),
            ArchFamily::ConvLstm => {
                common
                    && inr(h.filters1, self.filters)
                    && inr(h.filters2, self.filters)
                    && inr(h.kernel1, self.kernel)
                    && inr(h.kernel2, self.kernel)
            }
        }
    }

    pub fn sample(&self, family: ArchFamily, rng: &mut Rng) -> Hyperparams {
        let int = |r: (usize, usize), rng: &mut Rng| rng.random_range(r.0..=r.1);
        let (lo, hi) = (self.learning_rate.0.ln(), self.learning_rate.1.ln());
        let mut h = Hyperparams {
            learning_rate: rng.random_range(lo..=hi).exp(),
            dropout: rng.random_range(self.dropout.0..=self.dropout.1),
            batch_size: int(self.batch_size, rng),
            epochs: int(self.epochs, rng),
            units1: int(self.units, rng),
            units2: int(self.units, rng),
            units3: 0,
            filters1: 0,
            kernel1: 0,
            filters2: 0,
            kernel2: 0,
        };
        match family {
            ArchFamily::Lstm => h.units3 = int(self.units, rng),
            ArchFamily::ConvLstm => {
                h.filters1 = int(self.filters, rng);
                h.kernel1 = int(self.kernel, rng);
                h.filters2 = int(self.filters, rng);
                h.kernel2 = int(self.kernel, rng);
            }
        }
        h
    }

    /// Uniform draw within `±radius` (relative) of `best`, integers rounded,
    /// everything clamped to the space.
    pub fn perturb(&self, best: &Hyperparams, family: ArchFamily, radius: f64, rng: &mut Rng) -> Hyperparams {
        let real = |v: f64, r: (f64, f64), rng: &mut Rng| {
            let x = if radius > 0.0 { rng.random_range(v * (1.0 - radius)..=v * (1.0 + radius)) } else { v };
            x.clamp(r.0, r.1)
        };
        let int = |v: usize, r: (usize, usize), rng: &mut Rng| {
            let x = if radius > 0.0 {
                rng.random_range(v as f64 * (1.0 - radius)..=v as f64 * (1.0 + radius)).round() as usize
            } else {
                v
            };
            x.clamp(r.0, r.1)
        };
        let mut h = *best;
        h.learning_rate = real(best.learning_rate, self.learning_rate, rng);
        h.dropout = real(best.dropout, self.dropout, rng);
        h.batch_size = int(best.batch_size, self.batch_size, rng);
        h.epochs = int(best.epochs, self.epochs, rng);
        h.units1 = int(best.units1, self.units, rng);
        h.units2 = int(best.units2, self.units, rng);
        match family {
            ArchFamily::Lstm => h.units3 = int(best.units3, self.units, rng),
            ArchFamily::ConvLstm => {
                h.filters1 = int(best.filters1, self.filters, rng);
                h.kernel1 = int(best.kernel1, self.kernel, rng);
                h.filters2 = int(best.filters2, self.filters, rng);
                h.kernel2 = int(best.kernel2, self.kernel, rng);
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub stage: u8,
    pub index: usize,
    pub hyper: Hyperparams,
    /// Validation metrics; `None` when training diverged.
    pub metrics: Option<Metrics>,
    pub train_seed: u64,
}

impl Trial {
    fn f(&self) -> f64 {
        self.metrics.map_or(f64::NEG_INFINITY, |m| m.f_measure)
    }

    fn fns(&self) -> u64 {
        self.metrics.map_or(u64::MAX, |m| m.confusion.fn_)
    }
}

/// Higher validation F first, then fewer false negatives, then stage and
/// sample order.
pub fn rank(trials: &mut [Trial]) {
    trials.sort_by(|a, b| {
        b.f().total_cmp(&a.f()).then(a.fns().cmp(&b.fns())).then(a.stage.cmp(&b.stage)).then(a.index.cmp(&b.index))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Trial,
    /// Ranked best first.
    pub leaderboard: Vec<Trial>,
}

impl SearchResult {
    pub fn leaderboard_csv(&self) -> String {
        let mut s = String::from(
            "rank,stage,index,f_measure,accuracy,precision,recall,fn,learning_rate,dropout,batch_size,epochs,units1,units2,units3,filters1,kernel1,filters2,kernel2\n",
        );
        for (r, t) in self.leaderboard.iter().enumerate() {
            let h = &t.hyper;
            let (f, a, p, rc, fns) = match t.metrics {
                Some(m) => (
                    format!("{:.3}", m.f_measure),
                    format!("{:.3}", m.accuracy),
                    format!("{:.3}", m.precision),
                    format!("{:.3}", m.recall),
                    m.confusion.fn_.to_string(),
                ),
                None => ("diverged".into(), String::new(), String::new(), String::new(), String::new()),
            };
            s.push_str(&format!(
                "{},{},{},{f},{a},{p},{rc},{fns},{},{},{},{},{},{},{},{},{},{},{}\n",
                r + 1,
                t.stage,
                t.index,
                h.learning_rate,
                h.dropout,
                h.batch_size,
                h.epochs,
                h.units1,
                h.units2,
                h.units3,
                h.filters1,
                h.kernel1,
                h.filters2,
                h.kernel2
            ));
        }
        s
    }
}

fn run_trial(
    stage: u8,
    index: usize,
    hyper: Hyperparams,
    family: ArchFamily,
    train: &Dataset,
    val: &Dataset,
    seed: u64,
) -> Result<Trial, TunerError> {
    let train_seed = derive_seed(seed, Stream::Search, 1_000_000 * stage as u64 + index as u64);
    let metrics = match train_hyper(family, &hyper, train, train_seed) {
        Ok(mut t) => {
            let mut val = val.clone();
            val.bounds = train.bounds;
            let (mut m, _) = evaluate(&mut t.model, &val, DEFAULT_THRESHOLD)?;
            m.training_time_s = t.history.training_time_s;
            Some(m)
        }
        Err(crate::nn::NnError::Divergence { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Trial { stage, index, hyper, metrics, train_seed })
}

fn finish(mut trials: Vec<Trial>) -> Result<SearchResult, TunerError> {
    rank(&mut trials);
    let best = trials.first().cloned().ok_or(TunerError::AllDiverged)?;
    if best.metrics.is_none() {
        return Err(TunerError::AllDiverged);
    }
    Ok(SearchResult { best, leaderboard: trials })
}

fn check_disjoint(train: &Dataset, val: &Dataset) -> Result<(), TunerError> {
    let keys: std::collections::HashSet<_> =
        train.samples.iter().map(|s| (s.meta.scenario_id, s.meta.station_id, s.meta.t_end.to_bits())).collect();
    if val.samples.iter().any(|s| keys.contains(&(s.meta.scenario_id, s.meta.station_id, s.meta.t_end.to_bits()))) {
        return Err(TunerError::Overlap);
    }
    Ok(())
}

/// Trains `n` sampled configurations in parallel and ranks them by
/// validation F-measure.
pub fn random_search(
    space: &SearchSpace,
    family: ArchFamily,
    train: &Dataset,
    val: &Dataset,
    n: usize,
    seed: u64,
) -> Result<SearchResult, TunerError> {
    space.validate()?;
    if n == 0 {
        return Err(TunerError::Space("need at least one trial".into()));
    }
    check_disjoint(train, val)?;
    let configs: Vec<Hyperparams> = (0..n)
        .map(|i| space.sample(family, &mut rng_from_seed(derive_seed(seed, Stream::Search, i as u64))))
        .collect();
    let trials = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, h)| run_trial(1, i, h, family, train, val, seed))
        .collect::<Result<Vec<_>, _>>()?;
    finish(trials)
}

/// Second stage: `n` candidates within `radius` of the incumbent, which
/// stays in the running with its stage-one score.
#[allow(clippy::too_many_arguments)]
pub fn refine_search(
    incumbent: &Trial,
    space: &SearchSpace,
    family: ArchFamily,
    train: &Dataset,
    val: &Dataset,
    n: usize,
    radius: f64,
    seed: u64,
) -> Result<SearchResult, TunerError> {
    space.validate()?;
    if !(0.0..1.0).contains(&radius) {
        return Err(TunerError::Space(format!("radius {radius} not in [0, 1)")));
    }
    check_disjoint(train, val)?;
    let mut rng = rng_from_seed(derive_seed(seed, Stream::Search, u64::MAX));
    let configs: Vec<Hyperparams> = (0..n).map(|_| space.perturb(&incumbent.hyper, family, radius, &mut rng)).collect();
    let mut trials = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, h)| run_trial(2, i, h, family, train, val, seed))
        .collect::<Result<Vec<_>, _>>()?;
    trials.push(incumbent.clone());
    finish(trials)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_space_covers_published_optima() {
        let s = SearchSpace::paper();
        assert!(s.contains(&Hyperparams::table_lstm_attack5(), ArchFamily::Lstm));
        assert!(s.contains(&Hyperparams::table_lstm_attack10(), ArchFamily::Lstm));
        assert!(s.contains(&Hyperparams::table_conv_attack5(), ArchFamily::ConvLstm));
        assert!(s.contains(&Hyperparams::table_conv_attack10(), ArchFamily::ConvLstm));
    }

    #[test]
    fn samples_stay_inside() {
        let s = SearchSpace::desk();
        let mut rng = rng_from_seed(1);
        for fam in [ArchFamily::Lstm, ArchFamily::ConvLstm] {
            for _ in 0..200 {
                let h = s.sample(fam, &mut rng);
                assert!(s.contains(&h, fam));
                let p = s.perturb(&h, fam, 0.1, &mut rng);
                assert!(s.contains(&p, fam));
            }
        }
    }

    #[test]
    fn zero_radius_copies() {
        let s = SearchSpace::paper();
        let h = Hyperparams::table_conv_attack5();
        let mut rng = rng_from_seed(2);
        assert_eq!(s.perturb(&h, ArchFamily::ConvLstm, 0.0, &mut rng), h);
    }

    #[test]
    fn ranking_breaks_ties_on_false_negatives() {
        use crate::tuner::{Confusion, Metrics};
        let h = Hyperparams::desk(ArchFamily::Lstm);
        let mk = |index, tp, fn_, fp| Trial {
            stage: 1,
            index,
            hyper: h,
            metrics: Some(Metrics::from_confusion(Confusion { tp, fp, tn: 50, fn_ })),
            train_seed: 0,
        };
        // Same F (one error each), different FN.
        let mut t = vec![mk(0, 49, 1, 0), mk(1, 50, 0, 1), Trial { metrics: None, ..mk(2, 0, 0, 0) }];
        rank(&mut t);
        assert_eq!(t.iter().map(|t| t.index).collect::<Vec<_>>(), vec![1, 0, 2]);
    }
}
