use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CONJUGATED: &str = r#"{"kind":"conjugated_linear","matrix":[[2,1],[1,1]],
  "generator":[{"direction":0,"driver":1,"amplitude":0.05,"profile":[{"k":1,"sin":0.15915494309189535}]}]}"#;

fn hyperlab(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hyperlab"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("HYPERLAB_WORKERS", w),
        None => cmd.env_remove("HYPERLAB_WORKERS"),
    };
    cmd.output().expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn block<'a>(r: &'a Value, name: &str) -> &'a Value {
    r["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|b| b["name"] == name)
        .unwrap_or_else(|| panic!("block {name} missing"))
}

/// The report with run-dependent fields removed.
fn payload(mut r: Value) -> Value {
    let obj = r.as_object_mut().unwrap();
    obj.remove("wall_clock_seconds");
    obj.remove("workers");
    obj["config"]["output"] = Value::Null;
    obj["config"]["cache_dir"] = Value::Null;
    r
}

#[test]
fn spectrum_of_cat_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperlab(
        &["spectrum", "--matrix", "2,1;1,1", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    let exps = block(&r, "spectrum")["result"]["exponents"].as_array().unwrap().clone();
    let lam = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    assert!((exps[0].as_f64().unwrap() + lam).abs() < 1e-12);
    assert!((exps[1].as_f64().unwrap() - lam).abs() < 1e-12);
    assert_eq!(r["verdicts"]["irreducible"], "IRREDUCIBLE");
    assert_eq!(r["input_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn invalid_matrix_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperlab(
        &["spectrum", "--matrix", "2,1;1", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("matrix"), "{err}");
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn unknown_field_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"entropy": {"config": {"delta": 0.05, "depht": 3}}}"#).unwrap();
    let out = hyperlab(&["spectrum", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("entropy.config"), "{err}");
    assert!(err.contains("depht"), "{err}");
}

#[test]
fn missing_map_is_a_config_error() {
    let out = hyperlab(&["exponents"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn non_hyperbolic_matrix_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperlab(
        &["spectrum", "--matrix", "1,1;0,1", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(block(&r, "spectrum")["status"], "failed");
}

#[test]
fn unreachable_tolerance_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(r#"{{"map": {CONJUGATED}, "conjugacy": {{"tol": 1e-30, "test_points": 10}}}}"#),
    )
    .unwrap();
    let out = hyperlab(
        &["conjugacy", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    let r = report(dir.path());
    assert_eq!(block(&r, "conjugacy")["error"]["kind"], "no_convergence");
}

#[test]
fn conjugated_map_is_smooth_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperlab(
        &["full-rigidity", "--map", CONJUGATED, "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    for (name, v) in r["verdicts"].as_object().unwrap() {
        if name != "irreducible" {
            assert_eq!(v, "SMOOTH_CONSISTENT", "{name}");
        }
    }
    let sidecars: Vec<&str> = r["sidecars"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap())
        .collect();
    assert!(sidecars.contains(&"b3_sigma1.csv"));
    for s in sidecars {
        assert!(dir.path().join(s).exists(), "{s}");
    }
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let runs: Vec<Value> = ["1", "3"]
        .iter()
        .map(|w| {
            let dir = tempfile::tempdir().unwrap();
            let out = hyperlab(
                &["conjugacy", "--map", CONJUGATED, "--seed", "11", "--out", dir.path().to_str().unwrap()],
                Some(w),
            );
            assert_eq!(out.status.code(), Some(0));
            let r = report(dir.path());
            assert_eq!(r["workers"].as_u64().unwrap(), w.parse::<u64>().unwrap());
            payload(r)
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn bad_worker_count_is_a_config_error() {
    let out = hyperlab(&["spectrum", "--matrix", "2,1;1,1"], Some("many"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cached_bundles_match_cold_run() {
    let cache = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = cfg_dir.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(r#"{{"map": {CONJUGATED}, "gibbs": {{"bundle_grid": 6}}}}"#),
    )
    .unwrap();
    let runs: Vec<Value> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let out = hyperlab(
                &[
                    "gibbs",
                    "--config",
                    cfg.to_str().unwrap(),
                    "--cache-dir",
                    cache.path().to_str().unwrap(),
                    "--out",
                    dir.path().to_str().unwrap(),
                ],
                None,
            );
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            report(dir.path())
        })
        .collect();
    assert_eq!(block(&runs[0], "bundles")["result"]["from_cache"], false);
    assert_eq!(block(&runs[1], "bundles")["result"]["from_cache"], true);
    let strip = |r: &Value| {
        let mut p = payload(r.clone());
        for b in p["blocks"].as_array_mut().unwrap() {
            if b["name"] == "bundles" {
                b["result"]["from_cache"] = Value::Null;
            }
        }
        p
    };
    assert_eq!(strip(&runs[0]), strip(&runs[1]));
    assert_eq!(runs[0]["verdicts"]["gibbs_gaps"], "GEOMETRIC");
}
