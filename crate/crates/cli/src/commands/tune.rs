use oscguard_core::dataset::split;
use oscguard_core::nn::{train_hyper, DEFAULT_THRESHOLD};
use oscguard_core::rng::{derive_seed, rng_from_seed, Stream};
use oscguard_core::tuner::{evaluate, random_search, rank, refine_search, ResultRow, SearchResult};
use serde_json::json;

use super::train::{train_test, write_tables};
use crate::args::TuneArgs;
use crate::config::{parse_family, parse_space};
use crate::error::CliError;
use crate::output::{require, scores, timing_of, to_value, Context};

pub fn run(a: TuneArgs) -> Result<(), CliError> {
    let ctx = Context::new(&a.common)?;
    let sec = &ctx.file.tune;
    let data = require(a.data.as_deref(), sec.data.as_deref(), "data")?;
    let family = match &a.family {
        Some(f) => parse_family(f)?,
        None => sec.family,
    };
    let space = match (&a.space, sec.search_space) {
        (Some(s), _) => parse_space(s)?,
        (None, Some(s)) => s,
        (None, None) => parse_space(&sec.space)?,
    };
    let trials = a.trials.unwrap_or(sec.trials);
    let refine = a.refine.unwrap_or(sec.refine);
    let radius = a.radius.unwrap_or(sec.radius);

    let ds = super::load_dataset(data)?;
    let (train, test) = train_test(&ds, sec.train_fraction, ctx.seed)?;
    let (fit, val) = split(
        &train,
        1.0 - sec.validation_fraction,
        &mut rng_from_seed(derive_seed(ctx.seed, Stream::Split, 1)),
    )?;
    let stage1 = random_search(&space, family, &fit, &val, trials, ctx.seed)?;
    let result = if refine > 0 {
        let stage2 = refine_search(&stage1.best, &space, family, &fit, &val, refine, radius, ctx.seed)?;
        let mut all = stage2.leaderboard;
        all.extend(stage1.leaderboard.into_iter().filter(|t| *t != stage1.best));
        rank(&mut all);
        SearchResult { best: all[0].clone(), leaderboard: all }
    } else {
        stage1
    };

    let best = result.best.hyper;
    let mut trained = train_hyper(family, &best, &train, derive_seed(ctx.seed, Stream::Train, 0))?;
    let (mut m, _) = evaluate(&mut trained.model, &test, DEFAULT_THRESHOLD)?;
    m.training_time_s = trained.history.training_time_s;

    ctx.write_text("leaderboard.csv", &result.leaderboard_csv())?;
    let ck = ctx.path("model.ogck");
    trained.checkpoint.save(&ck).map_err(|e| CliError::from(e).at(&ck))?;
    let row = ResultRow { family, regime: ds.regime, hyper: best, metrics: m };
    write_tables(&ctx, std::slice::from_ref(&row))?;
    let search_timing: Vec<_> = result
        .leaderboard
        .iter()
        .map(|t| json!({ "stage": t.stage, "index": t.index, "training_time_s": t.metrics.map(|m| m.training_time_s) }))
        .collect();
    ctx.write_summary(
        "summary.json",
        json!({
            "command": "tune",
            "seed": ctx.seed,
            "family": family.name(),
            "regime": ds.regime.name(),
            "space": to_value(&space),
            "trials": trials,
            "refine": refine,
            "radius": radius,
            "best": {
                "stage": result.best.stage,
                "index": result.best.index,
                "hyperparams": to_value(&best),
                "validation": result.best.metrics.as_ref().map(scores),
            },
            "test": scores(&m),
        }),
        json!({ "final": timing_of(&m), "trials": search_timing }),
    )
}
