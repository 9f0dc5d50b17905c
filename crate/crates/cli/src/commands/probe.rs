use oscguard_core::dataset::{synthesize_dataset, DatasetConfig, Regime};
use oscguard_core::rng::{derive_seed, Stream};
use oscguard_core::tuner::early_detection_probe;
use serde_json::json;

use crate::args::ProbeArgs;
use crate::error::CliError;
use crate::output::{require, to_value, Context};

pub fn run(a: ProbeArgs) -> Result<(), CliError> {
    let ctx = Context::new(&a.common)?;
    let sec = &ctx.file.probe;
    let path = require(a.model.as_deref(), sec.model.as_deref(), "model")?;
    let (ck, mut model) = super::load_checkpoint(path)?;
    let bounds = ck
        .meta
        .norm_bounds
        .ok_or_else(|| CliError::Data(format!("{}: checkpoint carries no normalization bounds", path.display())))?;
    let regime = ck.meta.regime.unwrap_or(Regime::Attack5);
    let threshold = a.threshold.unwrap_or(sec.threshold);
    let cfg = DatasetConfig {
        normal: a.normal.unwrap_or(sec.normal),
        attack: a.attack.unwrap_or(sec.attack),
        grid: a.grid.clone().unwrap_or_else(|| sec.grid.clone()),
        regime,
        attack_tail_s: Some(sec.tail_s),
        ..DatasetConfig::default()
    };
    let mut probe = synthesize_dataset(&cfg, derive_seed(ctx.seed, Stream::Probe, 0))?;
    // Same scaling the model was trained with.
    probe.bounds = bounds;
    let r = early_detection_probe(&mut model, &probe, threshold)?;
    ctx.write_summary(
        "probe.json",
        json!({
            "command": "probe-1s",
            "seed": ctx.seed,
            "family": ck.meta.family.map(|f| f.name()),
            "regime": regime.name(),
            "tail_s": sec.tail_s,
            "threshold": threshold,
            "dataset": to_value(&cfg),
            "probe": to_value(&r),
        }),
        json!({}),
    )
}
