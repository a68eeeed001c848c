use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lnms(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lnms"))
        .args(args)
        .env("LNMS_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_CART: &str = r#"{"env": "cart1", "env_params": {"horizon": 6}, "max_steps": 60}"#;

fn run_small(dir: &Path, out: &str, rollouts: &str) -> Output {
    let cfg = write_config(dir, SMALL_CART);
    let out_dir = dir.join(out);
    lnms(&[
        "run",
        "--config",
        &cfg,
        "--rollouts",
        rollouts,
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
        "--strip-timing",
    ])
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn run_writes_one_file_per_rollout_and_a_store() {
    let tmp = TempDir::new().unwrap();
    let out = run_small(tmp.path(), "a", "10");
    assert!(out.status.success(), "{}", stderr(&out));
    let files = sorted_files(&tmp.path().join("a"));
    assert_eq!(files.iter().filter(|f| f.starts_with("rollout_")).count(), 10);
    assert!(files.contains(&"store.jsonl".to_string()));
    assert!(files.contains(&"config.json".to_string()));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("rollout ")).count(), 10);

    let echoed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/config.json")).unwrap()).unwrap();
    assert_eq!(echoed["rollouts"], 10);
    assert_eq!(echoed["seed"], 3);
    assert_eq!(echoed["env_params"]["horizon"], 6);
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    assert!(run_small(tmp.path(), "a", "4").status.success());
    assert!(run_small(tmp.path(), "b", "4").status.success());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let files = sorted_files(&a);
    assert_eq!(files, sorted_files(&b));
    for f in files.iter().filter(|f| *f != "config.json") {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn missing_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = lnms(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("config not found"), "{}", stderr(&out));
}

#[test]
fn malformed_config_and_unknown_keys_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    for body in ["{not json", r#"{"rollouts": 1, "colour": "red"}"#, r#"{"max_steps": 0}"#] {
        let cfg = write_config(tmp.path(), body);
        let out = lnms(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{body}: {}", stderr(&out));
    }
}

#[test]
fn unknown_bench_kind_is_a_usage_error() {
    let out = lnms(&["bench", "--which", "fastest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_environment_is_a_usage_error() {
    let out = lnms(&["run", "--env", "rocket"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn improve_reports_every_sample() {
    let tmp = TempDir::new().unwrap();
    assert!(run_small(tmp.path(), "a", "2").status.success());
    let store = tmp.path().join("a/store.jsonl");
    let n_samples = fs::read_to_string(&store).unwrap().lines().count();
    let cfg = write_config(tmp.path(), SMALL_CART);
    let out_dir = tmp.path().join("imp");
    let out = lnms(&[
        "improve",
        "--config",
        &cfg,
        "--store",
        store.to_str().unwrap(),
        "--budget",
        "0.5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(out_dir.join("improvement.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["index", "old_obj", "new_obj", "changed"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), n_samples);
    for row in rows {
        let old: f64 = row[1].parse().unwrap();
        let new: f64 = row[2].parse().unwrap();
        assert!(new <= old + 1e-9, "{old} -> {new}");
    }
}

#[test]
fn improve_with_unreadable_store_fails_at_runtime() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store.jsonl");
    fs::write(&store, "this is not a store\n").unwrap();
    let out = lnms(&["improve", "--store", store.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn partition_of_a_single_sample_is_one_region() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store.jsonl");
    fs::write(&store, "{\"x\":[0.3,0.0],\"modes\":[0,0,0,0,0,0,0,0,0,0],\"objective\":1.0}\n").unwrap();
    let out_dir = tmp.path().join("p");
    let out = lnms(&[
        "partition",
        "--store",
        store.to_str().unwrap(),
        "--resolution",
        "7x5",
        "--no-u0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(out_dir.join("partition.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["x1", "x2", "region_id", "u0"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 35);
    assert!(rows.iter().all(|r| &r[2] == "0"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 distinct regions"));
}

#[test]
fn wallclock_bench_writes_ratio() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"env_params": {"horizon": 6}}"#);
    let out_dir = tmp.path().join("w");
    let out = lnms(&[
        "bench",
        "--which",
        "wallclock",
        "--n",
        "10",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("timing.json")).unwrap()).unwrap();
    assert!(table["ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(table["n_ocps"], 10);
}

#[test]
fn mip_fraction_bench_writes_curve_and_trend() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"step_budget": 600}"#);
    let out_dir = tmp.path().join("m");
    let out = lnms(&[
        "bench",
        "--which",
        "mip-fraction",
        "--n",
        "1000",
        "--seed",
        "42",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(out_dir.join("mip_fraction.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["window", "mip_fraction"]);
    assert_eq!(rdr.records().count(), 6);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Spearman rho"));
}
