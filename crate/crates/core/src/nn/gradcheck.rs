use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::model::{bce_loss, Model};
use super::tensor::Tensor;
use super::NnError;
use crate::rng::rng_from_seed;

/// Gradients smaller than this are compared in absolute terms. Central
/// differences at epsilon 1e-5 carry round-off near 1e-11 on an O(1) loss, so
/// a lower floor would score exactly-zero gradients (a bias ahead of batch
/// norm, say) by noise alone.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindCheck {
    pub kind: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_kind: Vec<KindCheck>,
}

fn loss(model: &mut Model, x: &Tensor, y: &[f64], seed: u64) -> Result<f64, NnError> {
    // Same dropout masks on every evaluation.
    let mut rng = rng_from_seed(seed);
    let p = model.forward(x, &mut Model::train_ctx(&mut rng))?;
    bce_loss(&p, y)
}

/// Central differences against backprop on up to `per_kind` randomly chosen
/// trainable scalars of every layer type, in training mode with frozen
/// dropout masks.
pub fn grad_check(
    model: &mut Model,
    x: &Tensor,
    labels: &[f64],
    epsilon: f64,
    per_kind: usize,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    let mut rng = rng_from_seed(seed);
    let p = {
        let mut drop = rng_from_seed(seed);
        model.forward(x, &mut Model::train_ctx(&mut drop))?
    };
    model.zero_grads();
    model.backward(&p, labels)?;

    // (tensor index, element) grouped by layer kind.
    let mut by_kind: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, (name, prm)) in model.named_params().into_iter().enumerate() {
        if !prm.trainable {
            continue;
        }
        let kind = name.split('.').nth(1).unwrap_or("?").to_string();
        by_kind.entry(kind).or_default().extend((0..prm.len()).map(|e| (ti, e)));
    }
    let analytic: Vec<Vec<f64>> = model.named_params().into_iter().map(|(_, p)| p.grad.clone()).collect();

    let mut report = GradCheckReport { max_rel_error: 0.0, per_kind: Vec::new() };
    for (kind, all) in by_kind {
        let chosen: Vec<(usize, usize)> = if all.len() <= per_kind {
            all
        } else {
            sample(&mut rng, all.len(), per_kind).into_iter().map(|i| all[i]).collect()
        };
        let mut worst = 0.0f64;
        for &(ti, e) in &chosen {
            let orig = model.named_params()[ti].1.value[e];
            set(model, ti, e, orig + epsilon);
            let lp = loss(model, x, labels, seed)?;
            set(model, ti, e, orig - epsilon);
            let lm = loss(model, x, labels, seed)?;
            set(model, ti, e, orig);
            let num = (lp - lm) / (2.0 * epsilon);
            let ana = analytic[ti][e];
            let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
        }
        report.max_rel_error = report.max_rel_error.max(worst);
        report.per_kind.push(KindCheck { kind, checked: chosen.len(), max_rel_error: worst });
    }
    Ok(report)
}

fn set(model: &mut Model, ti: usize, e: usize, v: f64) {
    model.named_params_mut()[ti].1.value[e] = v;
}
