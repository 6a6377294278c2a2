use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fuzzysphere"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--outdir")
        .arg(dir.join("out"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect()
}

#[test]
fn spectrum_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"n": 20, "c12": 2.0}"#, &["spectrum"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let numeric = data_rows(&dir.path().join("out/spectrum_numeric.csv"));
    assert_eq!(numeric.len(), 1600);
    let total: u32 = data_rows(&dir.path().join("out/spectrum.csv"))
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse::<u32>().unwrap())
        .sum();
    assert_eq!(total, 1600);
    assert_eq!(
        json(&dir.path().join("out/spectrum_diff.json"))["within_tolerance"],
        true
    );

    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"n": 1}"#, &["spectrum"]);
    assert!(out.status.success());
    let distinct: BTreeSet<String> = data_rows(&dir.path().join("out/spectrum.csv"))
        .iter()
        .map(|r| r.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(distinct.len(), 2);
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"n": 4, "colomb_g": 0.1}"#, &["spectrum"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colomb_g"));
    let out = run(dir.path(), r#"{"n": 4, "smacof": {"eps": -1}}"#, &["spectrum"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("smacof"));
    let out = run(dir.path(), "{\"n\": 4,\n \"c12\": }", &["spectrum"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn observables_at_n20() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"n": 20}"#, &["observables"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let obs = json(&dir.path().join("out/observables.json"));
    assert_eq!(obs["dimension_estimate"], 2);
    let round = obs["volume_ratio"].as_f64().unwrap();
    assert!((round - 1.0).abs() < 1e-9, "{round}");
    assert!(json(&dir.path().join("out/manifest.json"))["volume_calibration"].is_number());

    let dir5 = tempfile::tempdir().unwrap();
    let out = run(dir5.path(), r#"{"n": 20, "c12": 5.0}"#, &["observables"]);
    assert!(out.status.success());
    let squeezed = json(&dir5.path().join("out/observables.json"))["volume_ratio"]
        .as_f64()
        .unwrap();
    assert!(squeezed < round);

    let out = run(
        dir5.path(),
        r#"{"n": 20}"#,
        &[
            "observables",
            "--spectrum",
            dir.path().join("out/spectrum.csv").to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir5.path().join("out/observables.json"))["dimension_estimate"], 2);
}

const SMALL: &str = r#"{"n": 3, "target_states": 7, "seed": 11}"#;

#[test]
fn pipeline_is_reproducible_and_hashed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(dir.path(), SMALL, &["pipeline", "--workers", "1"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let manifest = json(&a.path().join("out/manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["seed"], 11);
    let artifacts = manifest["artifacts"].as_object().unwrap();
    for name in [
        "spectrum.csv",
        "states.json",
        "distances.csv",
        "embedding.csv",
        "fit.json",
        "report.json",
    ] {
        assert!(artifacts.contains_key(name), "{name} missing");
    }
    for (name, meta) in artifacts {
        let bytes = fs::read(a.path().join("out").join(name)).unwrap();
        assert_eq!(meta["sha256"], fuzzysphere::distance::sha256_hex(&bytes), "{name}");
        if name.ends_with(".csv") || name.ends_with(".json") {
            let other = fs::read(b.path().join("out").join(name)).unwrap();
            assert!(bytes == other, "{name} differs between runs");
        }
    }
    let report = json(&a.path().join("out/report.json"));
    assert_eq!(report["state_count"], 7);
}

#[test]
fn resume_reuses_cached_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), SMALL, &["distances"]);
    assert!(out.status.success());
    let first = fs::read(dir.path().join("out/distances.csv")).unwrap();
    let cache = dir.path().join("out/cache");
    assert!(cache.exists());
    let out = run(dir.path(), SMALL, &["distances", "--resume"]);
    assert!(out.status.success());
    assert_eq!(first, fs::read(dir.path().join("out/distances.csv")).unwrap());
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join("out").join(name).to_str().unwrap().to_string();
    assert!(run(dir.path(), SMALL, &["states"]).status.success());
    let out = run(dir.path(), SMALL, &["distances", "--states", &p("states.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(dir.path(), SMALL, &["embed", "--distances", &p("distances.csv")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(dir.path(), SMALL, &["fit", "--embedding", &p("embedding.csv")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = json(&dir.path().join("out/fit.json"));
    assert_eq!(fit["expected_axes"], serde_json::json!([1.0, 1.0, 1.0]));
    assert!(fit["fit"]["axes"][0].as_f64().unwrap() > 0.0);

    let out = run(
        dir.path(),
        r#"{"n": 4, "target_states": 7}"#,
        &["distances", "--states", &p("states.json")],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_passes_for_the_deformed_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"n": 4, "c12": 1.5, "c13": 0.7}"#, &["validate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.path().join("out/validation.json"))["passed"], true);
}
