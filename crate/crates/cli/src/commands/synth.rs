use oscguard_core::attack::{fleet_size_for_attack, square_wave, station_pool, AttackLoad, WaveParams};
use oscguard_core::dataset::{synthesize_dataset, write_dataset_csv, write_dataset_file, ScenarioClass};
use oscguard_core::fleet::{write_logs_csv, StationLog};
use oscguard_core::grid::{
    build_grid, simulate, write_traces_csv, BenignNoise, GridConfig, GridModel, NoiseConfig, SumProfile,
    DEFAULT_DT, DEFAULT_SAMPLE_EVERY,
};
use oscguard_core::rng::{stream_rng, Stream};
use serde_json::json;

use crate::args::SynthArgs;
use crate::config::parse_regime;
use crate::error::CliError;
use crate::output::{flush, to_value, Context};

pub fn run(a: SynthArgs) -> Result<(), CliError> {
    let ctx = Context::new(&a.common)?;
    let mut cfg = ctx.file.synth.dataset.clone();
    if let Some(n) = a.normal {
        cfg.normal = n;
    }
    if let Some(n) = a.attack {
        cfg.attack = n;
    }
    if let Some(r) = &a.regime {
        cfg.regime = parse_regime(r)?;
    }
    if let Some(g) = &a.grid {
        cfg.grid = g.clone();
    }
    let csv = a.csv || ctx.file.synth.csv;

    let ds = synthesize_dataset(&cfg, ctx.seed)?;
    let path = ctx.path("dataset.ogds");
    write_dataset_file(&path, &ds).map_err(|e| CliError::from(e).at(&path))?;
    if csv {
        let w = ctx.create("dataset.csv")?;
        write_dataset_csv(w, &ds).map_err(|e| CliError::from(e).at(&ctx.path("dataset.csv")))?;
    }
    let model = build_grid(&GridConfig::builtin(&cfg.grid))?;
    preview(&ctx, &model)?;

    let (neg, pos) = ds.label_counts();
    let counts = ds.class_counts();
    let classes: serde_json::Map<String, serde_json::Value> =
        ScenarioClass::ALL.iter().map(|c| (c.name().to_string(), json!(counts[*c as usize]))).collect();
    ctx.write_summary(
        "summary.json",
        json!({
            "command": "synth",
            "seed": ctx.seed,
            "config": to_value(&cfg),
            "samples": ds.len(),
            "normal_windows": neg,
            "attack_windows": pos,
            "classes": classes,
            "bounds": to_value(&ds.bounds),
        }),
        json!({}),
    )
}

/// A short reference square-wave attack on the most loaded bus, written as
/// bus frequency traces and the schedules of one station per group.
fn preview(ctx: &Context, model: &GridModel) -> Result<(), CliError> {
    let bus = model
        .buses
        .iter()
        .max_by(|a, b| a.nominal_load_mw.total_cmp(&b.nominal_load_mw))
        .ok_or_else(|| CliError::Usage("grid has no load bus".into()))?;
    let rate = 11.0;
    let n = fleet_size_for_attack(0.2 * bus.nominal_load_mw, rate)? as usize;
    let p = WaveParams {
        bus: bus.bus_id,
        period: 1.5,
        duty: 0.5,
        magnitude_mw: n as f64 * rate / 1000.0,
        start: 10.0,
        duration: 20.0,
    };
    let scenario = square_wave(&p, &station_pool(1, bus.bus_id, n, rate))?;
    let mut attack = AttackLoad::new(&scenario, model)?;
    let mut noise = BenignNoise::new(model, NoiseConfig::default(), stream_rng(ctx.seed, Stream::Noise, 0))?;
    let mut load = SumProfile::new(vec![&mut attack, &mut noise]);
    let traces = simulate(model, &mut load, 40.0, DEFAULT_DT, DEFAULT_SAMPLE_EVERY)?;
    let path = ctx.path("preview_freq.csv");
    let mut w = ctx.create("preview_freq.csv")?;
    write_traces_csv(&mut w, &traces).map_err(|e| CliError::io(&path, e))?;
    flush(w, &path)?;

    let logs = scenario
        .groups
        .iter()
        .filter_map(|g| g.station_ids.first().map(|id| StationLog::from_events(*id, bus.bus_id, g.events.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let path = ctx.path("preview_logs.csv");
    let mut w = ctx.create("preview_logs.csv")?;
    write_logs_csv(&mut w, &logs).map_err(|e| CliError::io(&path, e))?;
    flush(w, &path)
}
