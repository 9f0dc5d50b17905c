use std::collections::HashSet;

use oscguard_core::dataset::{
    normalize_frequency, read_dataset, split, synthesize_dataset, write_dataset, DatasetConfig, DatasetError, Regime,
    ScenarioClass,
};
use oscguard_core::rng::rng_from_seed;
use proptest::prelude::*;

fn small(regime: Regime) -> DatasetConfig {
    DatasetConfig { normal: 12, attack: 12, regime, ..DatasetConfig::default() }
}

#[test]
fn synthesis_is_deterministic_and_balanced() {
    let cfg = small(Regime::Attack5);
    let a = synthesize_dataset(&cfg, 7).unwrap();
    let b = synthesize_dataset(&cfg, 7).unwrap();
    let (mut wa, mut wb) = (Vec::new(), Vec::new());
    write_dataset(&mut wa, &a).unwrap();
    write_dataset(&mut wb, &b).unwrap();
    assert_eq!(wa, wb);
    assert_eq!(a.label_counts(), (12, 12));
    assert_eq!(a.class_counts(), [3, 3, 3, 3, 6, 6]);
}

#[test]
fn every_window_is_well_formed() {
    let ds = synthesize_dataset(&small(Regime::Attack10), 3).unwrap();
    for i in 0..ds.len() {
        let w = ds.window(i);
        assert_eq!(w.events.len(), 240);
        assert!(w.events.iter().all(|e| [0.0, 1.0, 2.0].contains(e)));
        assert!(w.frequency.iter().all(|f| (0.0..=1.0).contains(f)));
        assert_eq!(w.label, ds.samples[i].class.is_attack() as u8);
    }
}

#[test]
fn attack_windows_carry_more_events_than_very_slow_normals() {
    let ds = synthesize_dataset(&DatasetConfig { normal: 40, attack: 40, ..DatasetConfig::default() }, 11).unwrap();
    let density = |keep: &dyn Fn(ScenarioClass) -> bool| {
        let picked: Vec<_> = ds.samples.iter().filter(|s| keep(s.class)).collect();
        picked.iter().map(|s| s.event_codes.iter().filter(|c| **c > 0).count()).sum::<usize>() as f64 / picked.len() as f64
    };
    let attack = density(&|c| c.is_attack());
    let very_slow = density(&|c| matches!(c, ScenarioClass::VerySlowNormalFreq | ScenarioClass::VerySlowAbnormalFreq));
    assert!(attack > very_slow, "{attack} vs {very_slow}");
}

#[test]
fn split_has_no_leakage_and_train_only_bounds() {
    let ds = synthesize_dataset(&DatasetConfig { normal: 25, attack: 25, ..DatasetConfig::default() }, 5).unwrap();
    let (train, test) = split(&ds, 0.8, &mut rng_from_seed(1)).unwrap();
    assert_eq!(train.len() + test.len(), ds.len());
    let key = |s: &oscguard_core::dataset::RawSample| (s.meta.scenario_id, s.meta.station_id, s.meta.t_end.to_bits());
    let seen: HashSet<_> = train.samples.iter().map(key).collect();
    assert!(test.samples.iter().all(|s| !seen.contains(&key(s))));
    let lo = train.samples.iter().flat_map(|s| &s.freq_hz).fold(f64::INFINITY, |a, b| a.min(*b));
    assert_eq!(train.bounds.min_hz, lo);
    assert_eq!(test.bounds, train.bounds);
}

#[test]
fn damaged_files_are_rejected() {
    let ds = synthesize_dataset(&small(Regime::Attack5), 2).unwrap();
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, &ds).unwrap();
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    let err = read_dataset(&bad[..]).unwrap_err();
    assert!(matches!(err, DatasetError::BadMagic));
    assert!(err.to_string().contains("bad magic"));
    assert!(read_dataset(&bytes[..bytes.len() - 3]).is_err());
    assert_eq!(read_dataset(&bytes[..]).unwrap(), ds);
}

proptest! {
    #[test]
    fn normalization_maps_into_unit_interval(
        lo in 59.0f64..60.0,
        width in 0.01f64..2.0,
        xs in prop::collection::vec(58.0f64..62.0, 240),
    ) {
        let out = normalize_frequency(&xs, lo, lo + width).unwrap();
        for (x, y) in xs.iter().zip(&out) {
            prop_assert!((0.0..=1.0).contains(y));
            if *x >= lo && *x <= lo + width {
                prop_assert!((y - (x - lo) / width).abs() < 1e-12);
            }
        }
    }
}
