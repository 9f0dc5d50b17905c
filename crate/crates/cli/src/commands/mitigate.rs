use std::path::Path;

use oscguard_core::grid::{build_grid, GridConfig};
use oscguard_core::mitigation::{run_closed_loop, write_trace_csv, Detection, MitigationConfig, ModelPair};
use serde_json::json;

use crate::args::MitigateArgs;
use crate::config::MODEL_DEMO_RATE_KW;
use crate::error::CliError;
use crate::output::{flush, to_value, Context};

fn load_detector(path: &Path) -> Result<(oscguard_core::nn::Model, oscguard_core::dataset::NormBounds), CliError> {
    let (ck, model) = super::load_checkpoint(path)?;
    let b = ck
        .meta
        .norm_bounds
        .ok_or_else(|| CliError::Data(format!("{}: checkpoint carries no normalization bounds", path.display())))?;
    Ok((model, b))
}

pub fn run(a: MitigateArgs) -> Result<(), CliError> {
    let ctx = Context::new(&a.common)?;
    let sec = &ctx.file.mitigate;
    let m1 = a.m1.as_deref().or(sec.m1.as_deref());
    let m2 = a.m2.as_deref().or(sec.m2.as_deref());
    // Without checkpoints the demo runs the worst-case detector.
    let worst = a.worst_case_detection || sec.worst_case_detection || (m1.is_none() && m2.is_none());
    let mut cfg = sec.scenario.clone().unwrap_or_else(|| {
        if worst {
            MitigationConfig::default()
        } else {
            MitigationConfig { charge_rate_kw: MODEL_DEMO_RATE_KW, ..MitigationConfig::default() }
        }
    });
    if let Some(r) = a.charge_rate_kw {
        cfg.charge_rate_kw = r;
    }
    let grid = a.grid.clone().unwrap_or_else(|| sec.grid.clone());
    let model = build_grid(&GridConfig::builtin(&grid))?;

    let mut pair;
    let detection = if worst {
        Detection::WorstCase
    } else {
        let (Some(p1), Some(p2)) = (m1, m2) else {
            return Err(CliError::Usage("model-driven detection needs both --m1 and --m2 checkpoints".into()));
        };
        let (d1, b1) = load_detector(p1)?;
        let (d2, b2) = load_detector(p2)?;
        pair = ModelPair::new(d1, b1, d2, b2);
        Detection::Models(&mut pair)
    };
    let report = run_closed_loop(&model, &cfg, detection, ctx.seed)?;

    for (name, header, values) in [
        ("freq.csv", "freq_hz", &report.freq_mitigated_hz),
        ("freq_unmitigated.csv", "freq_hz", &report.freq_unmitigated_hz),
        ("attack_load.csv", "attack_load_mw", &report.attack_load_mitigated_mw),
        ("attack_load_unmitigated.csv", "attack_load_mw", &report.attack_load_unmitigated_mw),
    ] {
        let path = ctx.path(name);
        let mut w = ctx.create(name)?;
        write_trace_csv(&mut w, header, &report.time_s, values).map_err(|e| CliError::io(&path, e))?;
        flush(w, &path)?;
    }
    ctx.write_summary(
        "summary.json",
        json!({
            "command": "mitigate-demo",
            "seed": ctx.seed,
            "config": to_value(&cfg),
            "summary": to_value(&report.summary),
        }),
        json!({}),
    )
}
