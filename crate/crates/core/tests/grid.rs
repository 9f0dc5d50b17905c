use oscguard_core::grid::{
    build_grid, simulate, BenignNoise, FlatProfile, FnProfile, GridConfig, NoiseConfig, SumProfile,
    BUILTIN_TOPOLOGIES,
};
use oscguard_core::rng::{stream_rng, Stream};
use oscguard_core::signal::{dominant_frequency, peak_to_peak};
use proptest::prelude::*;

#[test]
fn every_builtin_grid_rests_at_nominal() {
    for name in BUILTIN_TOPOLOGIES {
        let model = build_grid(&GridConfig::builtin(name)).unwrap();
        let traces = simulate(&model, &mut FlatProfile, 120.0, 0.01, 0.5).unwrap();
        for t in &traces {
            assert!(t.samples.iter().all(|f| (f - model.nominal_freq).abs() < 1e-9), "{name} bus {}", t.bus_id);
        }
    }
}

#[test]
fn a_load_increase_lowers_frequency_and_governors_recover_part_of_it() {
    let model = build_grid(&GridConfig::builtin("wscc9")).unwrap();
    let bus = 0;
    let mut step = FnProfile(|t: f64, out: &mut [f64]| {
        out.fill(0.0);
        if t >= 1.0 {
            out[bus] = 20.0;
        }
    });
    let tr = simulate(&model, &mut step, 60.0, 0.01, 0.1).unwrap();
    let f = &tr[bus].samples;
    let nadir = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let settled = *f.last().unwrap();
    assert!(nadir < model.nominal_freq);
    assert!(settled < model.nominal_freq && settled > nadir);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn square_waves_dominate_benign_noise(frac in 0.1f64..=0.3, freq in 0.5f64..=1.0, seed in 0u64..1000) {
        let model = build_grid(&GridConfig::builtin("wscc9")).unwrap();
        let bus = 0;
        let mw = frac * model.buses[bus].nominal_load_mw;
        let noise = || BenignNoise::new(&model, NoiseConfig::default(), stream_rng(seed, Stream::Noise, 0)).unwrap();
        let mut quiet = noise();
        let base = simulate(&model, &mut quiet, 40.0, 0.01, 0.05).unwrap();
        let mut wave = FnProfile(move |t: f64, out: &mut [f64]| {
            out.fill(0.0);
            if (t * freq).fract() < 0.5 {
                out[bus] = mw;
            }
        });
        let mut n = noise();
        let mut sum = SumProfile::new(vec![&mut wave, &mut n]);
        let hit = simulate(&model, &mut sum, 40.0, 0.01, 0.05).unwrap();
        let (b, h) = (&base[bus].samples[200..], &hit[bus].samples[200..]);
        prop_assert!(peak_to_peak(h) >= 5.0 * peak_to_peak(b));
        // 30 s of samples: one DFT bin is 1/30 Hz.
        prop_assert!((dominant_frequency(h, 0.05) - freq).abs() <= 1.0 / 30.0 + 1e-9);
    }
}
