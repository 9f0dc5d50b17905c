//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use oscguard_core::attack::fleet_size_for_attack;
use oscguard_core::dataset::{split, synthesize_dataset, Dataset, DatasetConfig, Regime};
use oscguard_core::grid::{
    build_grid, simulate, BenignNoise, FlatProfile, FnProfile, GridConfig, GridModel, NoiseConfig, SumProfile,
};
use oscguard_core::mitigation::{
    delay_for_request, run_closed_loop, Detection, Label, MitigationConfig, MitigationState, MAX_DELAY_S,
};
use oscguard_core::nn::{
    grad_check, train_hyper, Activation, ArchFamily, Hyperparams, LayerSpec, Model, NetworkSpec, Tensor,
    DEFAULT_THRESHOLD,
};
use oscguard_core::rng::{derive_seed, rng_from_seed, stream_rng, Stream};
use oscguard_core::signal::{dominant_bin, peak_to_peak};
use oscguard_core::tuner::{early_detection_probe, evaluate, Confusion, Metrics};

type Outcome = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Rows of the published confusion table are (actual N, actual A), columns
// (predicted N, predicted A).
fn metric_arithmetic() -> Outcome {
    let fixtures = [
        ("ConvLSTM 5-Attack", [985, 3, 9, 1003], [99.400, 99.405, 99.111, 99.702]),
        ("LSTM 5-Attack", [978, 10, 40, 972], [97.500, 97.493, 96.047, 98.982]),
        ("LSTM 10-Attack", [986, 2, 10, 1002], [99.400, 99.405, 99.012, 99.801]),
        ("ConvLSTM 10-Attack", [985, 3, 1, 1011], [99.800, 99.803, 99.901, 99.704]),
    ];
    let mut bad = Vec::new();
    for (name, [tn, fp, fn_, tp], want) in fixtures {
        let m = Metrics::from_confusion(Confusion { tp, fp, tn, fn_ });
        let got = [m.accuracy, m.f_measure, m.recall, m.precision];
        // The published LSTM 5-Attack F (97.493) is 97.49248 double rounded.
        if got.iter().zip(&want).any(|(g, w)| (g - w).abs() >= 1e-3) {
            bad.push(format!("{name}: got {got:?} want {want:?}"));
        }
    }
    check(bad.is_empty(), if bad.is_empty() { "4 published matrices reproduced within 0.001".into() } else { bad.join("; ") })
}

fn fleet_sizing() -> Outcome {
    let got: Vec<u64> = [11.0, 40.0, 360.0].iter().map(|kw| fleet_size_for_attack(84.0, *kw).unwrap()).collect();
    check(got == [7636, 2100, 233], format!("84 MW at 11/40/360 kW -> {got:?}"))
}

fn small_spec(layers: Vec<LayerSpec>, input_shape: Vec<usize>, init_std: f64) -> NetworkSpec {
    NetworkSpec { input_shape, layers, init_std }
}

fn gradients() -> Outcome {
    let sig = LayerSpec::Dense { units: 1, activation: Activation::Sigmoid };
    let stacks = [
        (
            "dense",
            small_spec(
                vec![
                    LayerSpec::Dense { units: 16, activation: Activation::LeakyRelu },
                    LayerSpec::Dense { units: 12, activation: Activation::Linear },
                    LayerSpec::Flatten,
                    sig.clone(),
                ],
                vec![6, 12],
                0.3,
            ),
            vec![6, 12],
        ),
        (
            "lstm",
            small_spec(
                vec![
                    LayerSpec::Lstm { units: 8, return_sequences: true },
                    LayerSpec::Lstm { units: 6, return_sequences: false },
                    sig.clone(),
                ],
                vec![8, 3],
                // Wider init keeps recurrent gradients well above finite-difference round-off.
                0.8,
            ),
            vec![8, 3],
        ),
        (
            "conv_lstm",
            small_spec(
                vec![
                    LayerSpec::ConvLstm { filters: 3, kernel: [3, 3], return_sequences: true },
                    LayerSpec::ConvLstm { filters: 2, kernel: [3, 3], return_sequences: false },
                    LayerSpec::Flatten,
                    sig,
                ],
                vec![4, 5, 2, 1],
                0.3,
            ),
            vec![4, 5, 2, 1],
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (kind, spec, shape) in stacks {
        let mut model = Model::new(spec, 11).map_err(|e| e.to_string())?;
        let batch = 3;
        let n: usize = shape.iter().product();
        let mut rng = rng_from_seed(5);
        let data: Vec<f64> = (0..batch * n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let mut full = vec![batch];
        full.extend(shape);
        let x = Tensor::new(full, data).map_err(|e| e.to_string())?;
        let report = grad_check(&mut model, &x, &[1.0, 0.0, 1.0], 1e-5, 400, 3).map_err(|e| e.to_string())?;
        let k = report.per_kind.iter().find(|k| k.kind == kind).ok_or(format!("{kind}: no parameters"))?;
        ok &= k.checked >= 200 && report.max_rel_error < 1e-4;
        lines.push(format!("{kind} {} params, max rel {:.1e}", k.checked, report.max_rel_error));
    }
    check(ok, lines.join("; "))
}

fn noise(model: &GridModel, seed: u64) -> BenignNoise {
    BenignNoise::new(model, NoiseConfig::default(), stream_rng(seed, Stream::Noise, 0)).unwrap()
}

fn grid_properties() -> Outcome {
    let model = build_grid(&GridConfig::builtin("wscc9")).map_err(|e| e.to_string())?;
    let nominal = model.nominal_freq;
    let dt = 0.01;
    let every = 0.05;

    let flat = simulate(&model, &mut FlatProfile, 120.0, dt, every).map_err(|e| e.to_string())?;
    let drift = flat.iter().flat_map(|t| &t.samples).fold(0.0f64, |m, f| m.max((f - nominal).abs()));

    let benign = simulate(&model, &mut noise(&model, 1), 120.0, dt, every).map_err(|e| e.to_string())?;
    let (inside, total) = benign.iter().flat_map(|t| &t.samples).fold((0usize, 0usize), |(i, n), f| {
        (i + ((f - nominal).abs() <= 0.1) as usize, n + 1)
    });
    let in_band = inside as f64 / total as f64;

    // Attack at the most loaded bus, measured over 60 s after a 10 s settle.
    let bus = model.buses.iter().enumerate().max_by(|a, b| a.1.nominal_load_mw.total_cmp(&b.1.nominal_load_mw)).unwrap().0;
    let settle = (10.0 / every) as usize;
    let span = (60.0 / every) as usize;
    let window = |trace: &[f64]| trace[settle..settle + span].to_vec();
    let base = window(&simulate(&model, &mut noise(&model, 2), 70.0, dt, every).map_err(|e| e.to_string())?[bus].samples);
    let base_p2p = peak_to_peak(&base);
    let mut worst_ratio = f64::INFINITY;
    let mut freq_ok = true;
    for frac in [0.1, 0.2, 0.3] {
        for f in [0.5, 0.75, 1.0] {
            let mw = frac * model.buses[bus].nominal_load_mw;
            let mut wave = FnProfile(move |t: f64, out: &mut [f64]| {
                out.fill(0.0);
                if (t * f).fract() < 0.5 {
                    out[bus] = mw;
                }
            });
            let mut n = noise(&model, 2);
            let mut sum = SumProfile::new(vec![&mut wave, &mut n]);
            let tr = simulate(&model, &mut sum, 70.0, dt, every).map_err(|e| e.to_string())?;
            let x = window(&tr[bus].samples);
            worst_ratio = worst_ratio.min(peak_to_peak(&x) / base_p2p);
            let (k, width) = dominant_bin(&x, every);
            freq_ok &= (k as f64 * width - f).abs() <= width + 1e-9;
        }
    }
    check(
        drift < 1e-9 && in_band >= 0.99 && worst_ratio >= 5.0 && freq_ok,
        format!(
            "flat drift {drift:.1e} Hz, benign in band {:.2}%, min attack/benign p2p {worst_ratio:.1}x, fundamentals within one bin: {freq_ok}",
            100.0 * in_band
        ),
    )
}

struct Detectors {
    conv5: Model,
    conv5_bounds: oscguard_core::dataset::NormBounds,
}

const DESK_SEED: u64 = 2024;

fn detection() -> (Outcome, Option<Detectors>) {
    let mut f = std::collections::HashMap::new();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut keep = None;
    for regime in [Regime::Attack5, Regime::Attack10] {
        let cfg = DatasetConfig { normal: 1000, attack: 1000, regime, ..DatasetConfig::default() };
        let ds = match synthesize_dataset(&cfg, DESK_SEED) {
            Ok(d) => d,
            Err(e) => return (Err(e.to_string()), None),
        };
        let (train, test) = split(&ds, 0.8, &mut stream_rng(DESK_SEED, Stream::Split, 0)).unwrap();
        for family in [ArchFamily::Lstm, ArchFamily::ConvLstm] {
            let h = Hyperparams::desk(family);
            let trained = match train_hyper(family, &h, &train, derive_seed(DESK_SEED, Stream::Train, 0)) {
                Ok(t) => t,
                Err(e) => return (Err(format!("{} {}: {e}", family.name(), regime.name())), None),
            };
            let mut model = trained.model;
            let test = Dataset { bounds: train.bounds, ..test.clone() };
            let (m, _) = evaluate(&mut model, &test, DEFAULT_THRESHOLD).unwrap();
            lines.push(format!("{} {} F {:.2} FN {:.2}%", family.name(), regime.name(), m.f_measure, m.fn_rate()));
            f.insert((family, regime), m.f_measure);
            if family == ArchFamily::ConvLstm {
                let (target, fn_cap) = match regime {
                    Regime::Attack5 => (95.0, 2.0),
                    Regime::Attack10 => (97.0, 2.0),
                };
                ok &= m.f_measure >= target && m.fn_rate() <= fn_cap;
                if regime == Regime::Attack5 {
                    keep = Some(Detectors { conv5: model, conv5_bounds: train.bounds });
                }
            }
        }
    }
    let g = |a, r| f[&(a, r)];
    let order = g(ArchFamily::ConvLstm, Regime::Attack5) >= g(ArchFamily::Lstm, Regime::Attack5)
        && g(ArchFamily::Lstm, Regime::Attack10) >= g(ArchFamily::Lstm, Regime::Attack5)
        && g(ArchFamily::ConvLstm, Regime::Attack10) >= g(ArchFamily::ConvLstm, Regime::Attack5);
    lines.push(format!("orderings hold: {order}"));
    (check(ok && order, lines.join("; ")), keep)
}

fn early_probe(d: Option<&mut Detectors>) -> Outcome {
    let d = d.ok_or("no 5-Attack ConvLSTM (detection run failed)")?;
    let cfg = DatasetConfig {
        normal: 500,
        attack: 500,
        regime: Regime::Attack5,
        attack_tail_s: Some(1.0),
        ..DatasetConfig::default()
    };
    let mut probe = synthesize_dataset(&cfg, derive_seed(DESK_SEED, Stream::Probe, 0)).map_err(|e| e.to_string())?;
    probe.bounds = d.conv5_bounds;
    let r = early_detection_probe(&mut d.conv5, &probe, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
    let recall = r.recall.unwrap_or(0.0);
    let fp = r.fp_rate.unwrap_or(100.0);
    check(
        recall >= 20.0 && fp <= 1.0,
        format!("recall {recall:.1}% ({}/{}), benign flagged {fp:.2}% ({}/{})", r.detected, r.attacks, r.false_positives, r.normals),
    )
}

fn mitigation() -> Outcome {
    let model = build_grid(&GridConfig::builtin("wscc9")).map_err(|e| e.to_string())?;
    let cfg = MitigationConfig::default();
    let r = run_closed_loop(&model, &cfg, Detection::WorstCase, 7).map_err(|e| e.to_string())?;
    let s = &r.summary;
    let start = s.mitigation_start_s.unwrap_or(f64::NAN);
    let onset = s.decay_onset_s.unwrap_or(f64::INFINITY);
    let band = s.time_to_normal_band_s.unwrap_or(f64::INFINITY);
    let plateau = s.plateau_fraction.unwrap_or(0.0);
    let ratio = s.spectral_ratio.unwrap_or(f64::INFINITY);
    check(
        (start - (cfg.attack_offset_s + 5.0)).abs() < 1e-9
            && onset <= 1.0
            && band <= 2.0
            && (0.35..=0.65).contains(&plateau)
            && ratio < 0.2,
        format!(
            "mitigation at {start:.2} s, decay after {onset:.2} s, in band after {band:.2} s, plateau {:.1}% of {:.2} MW, fundamental power ratio {ratio:.3}",
            100.0 * plateau, s.attack_mw
        ),
    )
}

fn algorithm_semantics() -> Outcome {
    use Label::*;
    let mut bad = Vec::new();
    for prev in [false, true] {
        for (l1, l2) in [(Normal, Normal), (Normal, Abnormal), (Abnormal, Normal), (Abnormal, Abnormal)] {
            let mut s = MitigationState { active: prev, ..MitigationState::new() };
            let now = s.observe(1.0, 1, 5, l1, l2);
            let want = l1.is_abnormal() || l2.is_abnormal();
            if now != want || s.active != want {
                bad.push(format!("{prev} {l1:?} {l2:?} -> {now}"));
            }
            if s.activations > 0 && (s.report_log.len() as u64) < s.activations {
                bad.push(format!("{prev} {l1:?} {l2:?}: missing operator report"));
            }
        }
    }
    let mut rng = rng_from_seed(9);
    let mut s = MitigationState::new();
    let idle: Vec<f64> = (0..1000).map(|_| delay_for_request(&mut rng, &s)).collect();
    s.observe(0.0, 1, 5, Abnormal, Normal);
    let busy: Vec<f64> = (0..100_000).map(|_| delay_for_request(&mut rng, &s)).collect();
    let delays_ok = idle.iter().all(|d| *d == 0.0) && busy.iter().all(|d| *d > 0.0 && *d <= MAX_DELAY_S);
    // Alternating labels: every activation must leave a report.
    let mut s = MitigationState::new();
    for i in 0..200 {
        let l = if (i / 3) % 2 == 0 { Abnormal } else { Normal };
        s.observe(i as f64, 1, 5, l, Normal);
    }
    let reports_ok = s.activations > 0 && s.report_log.len() as u64 >= s.activations;
    check(
        bad.is_empty() && delays_ok && reports_ok,
        format!(
            "8 decision rows {}, delays in (0, {MAX_DELAY_S}] only while active: {delays_ok}, {} reports for {} activations",
            if bad.is_empty() { "match".to_string() } else { bad.join(", ") },
            s.report_log.len(),
            s.activations
        ),
    )
}

fn reproducibility() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = |name: &str| {
        let p = root.path().join(name);
        std::fs::create_dir_all(&p).unwrap();
        p
    };
    let data = root.path().join("a-synth").join("dataset.ogds");
    let model = root.path().join("a-train").join("model.ogck");
    let data_s = data.to_str().unwrap().to_string();
    let model_s = model.to_str().unwrap().to_string();
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("synth", vec!["synth", "--seed", "4", "--normal", "30", "--attack", "30"]),
        ("train", vec!["train", "--seed", "4", "--data", &data_s, "--family", "lstm", "--epochs", "2"]),
        ("tune", vec!["tune", "--seed", "4", "--data", &data_s, "--family", "lstm", "--trials", "3", "--refine", "2"]),
        ("eval", vec!["eval", "--seed", "4", "--data", &data_s, "--model", &model_s]),
        ("probe-1s", vec!["probe-1s", "--seed", "4", "--model", &model_s, "--normal", "10", "--attack", "10"]),
        ("mitigate-demo", vec!["mitigate-demo", "--seed", "4", "--worst-case-detection"]),
    ];
    let mut differing = Vec::new();
    for (name, args) in &runs {
        let a = dir(&format!("a-{name}"));
        let b = dir(&format!("b-{name}"));
        for out in [&a, &b] {
            let code = common::oscguard_in(out, args);
            if code != 0 {
                return Err(format!("{name} exited with {code}"));
            }
        }
        let (da, db) = (common::digest_dir(&a), common::digest_dir(&b));
        if da.is_empty() || da != db {
            differing.push(*name);
        }
    }
    check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} subcommands byte-identical across reruns", runs.len())
        } else {
            format!("outputs differ for {differing:?}")
        },
    )
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "metric arithmetic", budget: Duration::from_secs(1) },
        Criterion { id: 2, name: "fleet sizing", budget: Duration::from_secs(1) },
        Criterion { id: 3, name: "gradient check", budget: Duration::from_secs(120) },
        Criterion { id: 4, name: "grid properties", budget: Duration::from_secs(120) },
        Criterion { id: 5, name: "desk-scale detection", budget: Duration::from_secs(1800) },
        Criterion { id: 6, name: "1 s early detection probe", budget: Duration::from_secs(60) },
        Criterion { id: 7, name: "closed-loop mitigation", budget: Duration::from_secs(120) },
        Criterion { id: 8, name: "detection/mitigation decision semantics", budget: Duration::from_secs(1) },
        Criterion { id: 9, name: "reproducibility", budget: Duration::from_secs(600) },
    ];
    let mut detectors = None;
    let mut failed = 0;
    for c in &criteria {
        let t0 = Instant::now();
        let outcome = match c.id {
            1 => metric_arithmetic(),
            2 => fleet_sizing(),
            3 => gradients(),
            4 => grid_properties(),
            5 => {
                let (o, d) = detection();
                detectors = d;
                o
            }
            6 => early_probe(detectors.as_mut()),
            7 => mitigation(),
            8 => algorithm_semantics(),
            _ => reproducibility(),
        };
        let took = t0.elapsed();
        let in_time = took <= c.budget;
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let timing = format!("{:.2} s of {} s", took.as_secs_f64(), c.budget.as_secs());
        println!("{} criterion {}: {} | {detail} | {timing}", if pass { "PASS" } else { "FAIL" }, c.id, c.name);
        failed += !pass as u32;
    }
    println!("{} of {} criteria passed", criteria.len() as u32 - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
