use oscguard_core::dataset::{split, write_dataset_file, Dataset};
use oscguard_core::nn::{train_hyper, ArchFamily, Hyperparams, DEFAULT_THRESHOLD};
use oscguard_core::dataset::Regime;
use oscguard_core::rng::{derive_seed, rng_from_seed, Stream};
use oscguard_core::tuner::{all_tables, evaluate, timing_table, ResultRow};
use serde_json::json;

use crate::args::TrainArgs;
use crate::config::parse_family;
use crate::error::CliError;
use crate::output::{require, scores, timing_of, to_value, Context};

pub(crate) fn preset(name: &str, family: ArchFamily, regime: Regime) -> Result<Hyperparams, CliError> {
    match (name, family, regime) {
        ("desk", f, _) => Ok(Hyperparams::desk(f)),
        ("table", ArchFamily::Lstm, Regime::Attack5) => Ok(Hyperparams::table_lstm_attack5()),
        ("table", ArchFamily::Lstm, Regime::Attack10) => Ok(Hyperparams::table_lstm_attack10()),
        ("table", ArchFamily::ConvLstm, Regime::Attack5) => Ok(Hyperparams::table_conv_attack5()),
        ("table", ArchFamily::ConvLstm, Regime::Attack10) => Ok(Hyperparams::table_conv_attack10()),
        (other, _, _) => Err(CliError::Usage(format!("unknown preset {other:?} (desk, table)"))),
    }
}

/// Stratified train/test split shared by `train` and `tune`.
pub(crate) fn train_test(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), CliError> {
    Ok(split(ds, fraction, &mut rng_from_seed(derive_seed(seed, Stream::Split, 0)))?)
}

/// Report tables without the wall-clock one, which goes to its own file.
pub(crate) fn write_tables(ctx: &Context, rows: &[ResultRow]) -> Result<(), CliError> {
    let all = all_tables(rows);
    let reproducible = all.split("\nTiming\n").next().unwrap_or(&all);
    ctx.write_text("tables.txt", reproducible)?;
    ctx.write_text("timing.txt", &format!("Timing\n{}", timing_table(rows)))
}

pub fn run(a: TrainArgs) -> Result<(), CliError> {
    let ctx = Context::new(&a.common)?;
    let sec = &ctx.file.train;
    let data = require(a.data.as_deref(), sec.data.as_deref(), "data")?;
    let family = match &a.family {
        Some(f) => parse_family(f)?,
        None => sec.family,
    };
    let ds = super::load_dataset(data)?;
    let mut h = match sec.hyper {
        Some(h) => h,
        None => preset(a.preset.as_deref().unwrap_or(&sec.preset), family, ds.regime)?,
    };
    if let Some(v) = a.epochs.or(sec.epochs) {
        h.epochs = v;
    }
    if let Some(v) = a.learning_rate.or(sec.learning_rate) {
        h.learning_rate = v;
    }
    if let Some(v) = a.batch_size.or(sec.batch_size) {
        h.batch_size = v;
    }
    if let Some(v) = a.dropout.or(sec.dropout) {
        h.dropout = v;
    }
    h.validate(family).map_err(CliError::from)?;

    let (train, test) = train_test(&ds, sec.train_fraction, ctx.seed)?;
    let mut trained = train_hyper(family, &h, &train, derive_seed(ctx.seed, Stream::Train, 0))?;
    let (mut m, _) = evaluate(&mut trained.model, &test, DEFAULT_THRESHOLD)?;
    m.training_time_s = trained.history.training_time_s;

    let ck = ctx.path("model.ogck");
    trained.checkpoint.save(&ck).map_err(|e| CliError::from(e).at(&ck))?;
    let tp = ctx.path("test.ogds");
    write_dataset_file(&tp, &test).map_err(|e| CliError::from(e).at(&tp))?;
    let row = ResultRow { family, regime: ds.regime, hyper: h, metrics: m };
    write_tables(&ctx, std::slice::from_ref(&row))?;
    ctx.write_summary(
        "summary.json",
        json!({
            "command": "train",
            "seed": ctx.seed,
            "family": family.name(),
            "regime": ds.regime.name(),
            "hyperparams": to_value(&h),
            "train_size": train.len(),
            "test_size": test.len(),
            "bounds": to_value(&train.bounds),
            "loss_history": trained.history.epoch_loss,
            "test": scores(&m),
        }),
        timing_of(&m),
    )
}
