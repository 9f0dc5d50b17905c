use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use oscguard_core::dataset::{synthesize_dataset, DatasetConfig};
use oscguard_core::grid::{build_grid, simulate, BenignNoise, GridConfig, NoiseConfig};
use oscguard_core::mitigation::{run_closed_loop, Detection, MitigationConfig};
use oscguard_core::nn::{ArchFamily, Hyperparams, Model};
use oscguard_core::rng::rng_from_seed;

fn grid(c: &mut Criterion) {
    let model = build_grid(&GridConfig::builtin("wscc9")).unwrap();
    c.bench_function("wscc9 10 s with benign noise", |b| {
        b.iter(|| {
            let mut noise = BenignNoise::new(&model, NoiseConfig::default(), rng_from_seed(1)).unwrap();
            black_box(simulate(&model, &mut noise, 10.0, 0.01, 0.05).unwrap())
        })
    });
}

fn dataset(c: &mut Criterion) {
    let cfg = DatasetConfig { normal: 4, attack: 4, ..DatasetConfig::default() };
    let mut g = c.benchmark_group("dataset");
    g.sample_size(10);
    g.bench_function("synthesize 4+4 scenarios", |b| b.iter(|| black_box(synthesize_dataset(&cfg, 3).unwrap())));
    let ds = synthesize_dataset(&cfg, 3).unwrap();
    g.bench_function("build one window", |b| b.iter(|| black_box(ds.window(black_box(0)))));
    g.finish();
}

fn inference(c: &mut Criterion) {
    let ds = synthesize_dataset(&DatasetConfig { normal: 1, attack: 1, ..DatasetConfig::default() }, 3).unwrap();
    let w = ds.window(1);
    for family in [ArchFamily::Lstm, ArchFamily::ConvLstm] {
        let mut model = Model::new(Hyperparams::desk(family).spec(family), 1).unwrap();
        c.bench_function(&format!("{} desk predict", family.name()), |b| {
            b.iter(|| black_box(model.predict(&w).unwrap()))
        });
    }
}

fn mitigation(c: &mut Criterion) {
    let model = build_grid(&GridConfig::builtin("wscc9")).unwrap();
    let cfg = MitigationConfig::default();
    let mut g = c.benchmark_group("mitigation");
    g.sample_size(10);
    g.bench_function("worst-case closed loop", |b| {
        b.iter(|| black_box(run_closed_loop(&model, &cfg, Detection::WorstCase, 7).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, grid, dataset, inference, mitigation);
criterion_main!(benches);
