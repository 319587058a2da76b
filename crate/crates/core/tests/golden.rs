use std::path::PathBuf;

use spatial_bnp::classical::hotelling_one_sample;
use spatial_bnp::harness::{read_sample, run_power_study, StudyConfig};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(serde::Deserialize)]
struct Golden {
    theta0: Vec<f64>,
    statistic: f64,
    p_value: f64,
}

#[test]
fn hotelling_matches_independent_reference() {
    let data = read_sample(&fixture("gaussian_shift_seed42.csv"), false).unwrap();
    assert_eq!((data.len(), data.dim()), (50, 2));
    let golden: Golden = toml::from_str(&std::fs::read_to_string(fixture("hotelling_golden.toml")).unwrap()).unwrap();
    let out = hotelling_one_sample(&data, &golden.theta0, 0.05).unwrap();
    assert!((out.statistic - golden.statistic).abs() <= 1e-10 * golden.statistic, "{}", out.statistic);
    let p = out.p_value.unwrap();
    assert!((p - golden.p_value).abs() <= 1e-9 * golden.p_value, "{p}");
    assert!(out.reject);
}

#[test]
fn small_study_table_is_pinned() {
    let config = StudyConfig::from_path(&fixture("small_study.toml")).unwrap();
    let table = run_power_study(&config).unwrap();
    let expected = std::fs::read_to_string(fixture("small_study.csv")).unwrap();
    assert_eq!(table.to_csv(), expected);
}
