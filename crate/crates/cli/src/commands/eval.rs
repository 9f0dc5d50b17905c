use oscguard_core::dataset::Regime;
use oscguard_core::nn::{ArchFamily, Hyperparams};
use oscguard_core::tuner::{evaluate, Confusion, Metrics, ResultRow};
use serde_json::{json, Value};

use super::train::{preset, write_tables};
use crate::args::EvalArgs;
use crate::config::{parse_family, parse_regime};
use crate::error::CliError;
use crate::output::{scores, timing_of, Context};

pub fn run(a: EvalArgs) -> Result<(), CliError> {
    let ctx = Context::new(&a.common)?;
    let sec = &ctx.file.eval;
    let threshold = a.threshold.unwrap_or(sec.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Usage(format!("threshold {threshold} not in [0, 1]")));
    }
    let confusion = match a.confusion.as_deref() {
        Some([tp, fp, tn, fn_]) => Some([*tp, *fp, *tn, *fn_]),
        Some(v) => return Err(CliError::Usage(format!("--confusion takes TP,FP,TN,FN; got {} values", v.len()))),
        None => sec.confusion,
    };
    let models = if a.models.is_empty() { sec.models.clone() } else { a.models.clone() };

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut timing = Vec::new();
    if let Some([tp, fp, tn, fn_]) = confusion {
        let family = match &a.family {
            Some(f) => parse_family(f)?,
            None => sec.family.unwrap_or(ArchFamily::ConvLstm),
        };
        let regime = match a.regime.as_deref().or(sec.regime.as_deref()) {
            Some(r) => parse_regime(r)?,
            None => Regime::Attack5,
        };
        let m = Metrics::from_confusion(Confusion { tp, fp, tn, fn_ });
        rows.push(ResultRow { family, regime, hyper: preset("table", family, regime)?, metrics: m });
        entries.push(json!({ "source": "confusion", "family": family.name(), "regime": regime.name(), "metrics": scores(&m) }));
    } else {
        if models.is_empty() {
            return Err(CliError::Usage("give --model (repeatable) or --confusion TP,FP,TN,FN".into()));
        }
        let data = a
            .data
            .as_deref()
            .or(sec.data.as_deref())
            .ok_or_else(|| CliError::Usage("missing --data".into()))?;
        let ds = super::load_dataset(data)?;
        for path in &models {
            let (ck, mut model) = super::load_checkpoint(path)?;
            let mut test = ds.clone();
            if let Some(b) = ck.meta.norm_bounds {
                test.bounds = b;
            }
            let (m, _) = evaluate(&mut model, &test, threshold)?;
            let family = ck.meta.family.unwrap_or(ArchFamily::ConvLstm);
            let hyper = ck.meta.hyperparams.unwrap_or_else(|| Hyperparams::desk(family));
            rows.push(ResultRow { family, regime: ds.regime, hyper, metrics: m });
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            entries.push(json!({ "source": name, "family": family.name(), "regime": ds.regime.name(), "metrics": scores(&m) }));
            timing.push(json!({ "source": name, "mean_prediction_time_s": timing_of(&m)["mean_prediction_time_s"] }));
        }
    }
    write_tables(&ctx, &rows)?;
    ctx.write_summary(
        "metrics.json",
        json!({ "command": "eval", "seed": ctx.seed, "threshold": threshold, "evaluations": entries }),
        json!({ "models": Value::Array(timing) }),
    )
}
