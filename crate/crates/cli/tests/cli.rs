mod common;

use common::{digest_dir, oscguard, oscguard_in, read_json};

#[test]
fn usage_faults_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(oscguard(&["no-such-command"]), 1);
    assert_eq!(oscguard(&["synth", "--out", "/definitely/not/here"]), 1);
    assert_eq!(oscguard_in(dir.path(), &["eval"]), 1);
    assert_eq!(oscguard_in(dir.path(), &["eval", "--confusion", "1,2,3"]), 1);
    assert_eq!(oscguard_in(dir.path(), &["eval", "--confusion", "1,2,3,4", "--threshold", "2"]), 1);
    assert_eq!(oscguard_in(dir.path(), &["mitigate-demo", "--m1", "only-one.ogck"]), 1);
}

#[test]
fn data_faults_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ogck");
    assert_eq!(oscguard_in(dir.path(), &["probe-1s", "--model", missing.to_str().unwrap()]), 2);

    let junk = dir.path().join("junk.ogds");
    std::fs::write(&junk, b"not a dataset at all").unwrap();
    assert_eq!(oscguard_in(dir.path(), &["train", "--data", junk.to_str().unwrap()]), 2);
}

#[test]
fn config_files_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[eval]\nthreshhold = 0.4\n").unwrap();
    assert_eq!(oscguard_in(dir.path(), &["eval", "--config", bad.to_str().unwrap()]), 1);

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "seed = 9\n[eval]\nconfusion = [1003, 3, 985, 9]\n").unwrap();
    assert_eq!(oscguard_in(dir.path(), &["eval", "--config", good.to_str().unwrap()]), 0);
    let v = read_json(&dir.path().join("metrics.json"));
    assert_eq!(v["results"]["seed"], 9);
}

#[test]
fn confusion_fixture_scores() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(oscguard_in(dir.path(), &["eval", "--confusion", "1003,3,985,9"]), 0);
    let v = read_json(&dir.path().join("metrics.json"));
    let m = &v["results"]["evaluations"][0]["metrics"];
    let close = |k: &str, want: f64| (m[k].as_f64().unwrap() - want).abs() < 5e-4;
    assert!(close("accuracy", 99.400), "{m}");
    assert!(close("f_measure", 99.405), "{m}");
    assert!(close("recall", 99.111), "{m}");
    assert!(close("precision", 99.702), "{m}");
    assert!(v.get("timing").is_some());
    let tables = std::fs::read_to_string(dir.path().join("tables.txt")).unwrap();
    assert!(tables.contains("99.40"), "{tables}");
}

#[test]
fn worst_case_demo_mitigates_five_seconds_after_onset() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(oscguard_in(dir.path(), &["mitigate-demo", "--seed", "3"]), 0);
    let s = &read_json(&dir.path().join("summary.json"))["results"]["summary"];
    let start = s["attack_start_s"].as_f64().unwrap();
    assert!((s["mitigation_start_s"].as_f64().unwrap() - (start + 5.0)).abs() < 1e-9, "{s}");
    assert!(s["time_to_normal_band_s"].as_f64().unwrap() <= 2.0, "{s}");

    let freq = std::fs::read_to_string(dir.path().join("freq.csv")).unwrap();
    assert_eq!(freq.lines().next(), Some("time_s,freq_hz"));
    let load = std::fs::read_to_string(dir.path().join("attack_load.csv")).unwrap();
    assert_eq!(load.lines().next(), Some("time_s,attack_load_mw"));
}

#[test]
fn synth_train_eval_pipeline_is_reproducible() {
    let root = tempfile::tempdir().unwrap();
    let mk = |n: &str| {
        let p = root.path().join(n);
        std::fs::create_dir(&p).unwrap();
        p
    };
    let (s1, s2, t1, e1) = (mk("s1"), mk("s2"), mk("t1"), mk("e1"));
    let synth = ["synth", "--seed", "6", "--normal", "12", "--attack", "12", "--csv"];
    assert_eq!(oscguard_in(&s1, &synth), 0);
    assert_eq!(oscguard_in(&s2, &synth), 0);
    assert_eq!(digest_dir(&s1), digest_dir(&s2));

    let freq = std::fs::read_to_string(s1.join("preview_freq.csv")).unwrap();
    assert_eq!(freq.lines().next(), Some("time_s,bus_id,freq_hz"));
    let logs = std::fs::read_to_string(s1.join("preview_logs.csv")).unwrap();
    assert_eq!(logs.lines().next(), Some("station_id,bus_id,time_s,event"));

    let data = s1.join("dataset.ogds");
    let data = data.to_str().unwrap();
    assert_eq!(oscguard_in(&t1, &["train", "--seed", "6", "--data", data, "--family", "lstm", "--epochs", "1"]), 0);
    let model = t1.join("model.ogck");
    assert_eq!(oscguard_in(&e1, &["eval", "--data", data, "--model", model.to_str().unwrap()]), 0);
    let v = read_json(&e1.join("metrics.json"));
    let f = v["results"]["evaluations"][0]["metrics"]["f_measure"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&f));
}
