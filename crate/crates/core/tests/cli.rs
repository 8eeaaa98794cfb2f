use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sgpvm::bench::CSV_HEADER;
use sgpvm::runner::{Manifest, SUMMARY_HEADER};

const K2: &str = r#"
seed = 3
replicates = 3

[problem]
kind = "changing_env"
k = 2

[population]
size = 30
generations = 20

[selection]
scheme = "elite_roulette"
"#;

fn sgpvm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgpvm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn evolve_writes_histories_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), K2);
    let out = sgpvm(dir.path(), &["evolve", &config, "--out-dir", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for i in 0..3 {
        let csv = fs::read_to_string(run.join(format!("replicate_{i}_history.csv"))).unwrap();
        assert!(csv.starts_with("generation,max_fitness,mean_fitness,solved\n"));
    }
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some(SUMMARY_HEADER));
    assert_eq!(summary.lines().count(), 4);
    let Manifest::Evolve(m) = Manifest::load(&run.join("manifest.json")).unwrap() else {
        panic!("expected an evolve manifest");
    };
    assert_eq!(m.replicate_seeds.len(), 3);
    assert_eq!(m.signal_tags.len(), 2);
    assert_eq!(m.checksums.len(), 4);
}

#[test]
fn zero_replicates_write_manifest_and_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &K2.replace("replicates = 3", "replicates = 0"));
    let out = sgpvm(dir.path(), &["evolve", &config, "--out-dir", "run"]);
    assert!(out.status.success());
    let run = dir.path().join("run");
    assert_eq!(
        fs::read_to_string(run.join("summary.csv")).unwrap(),
        format!("{SUMMARY_HEADER}\n")
    );
    assert!(run.join("manifest.json").exists());
    assert!(!run.join("replicate_0_history.csv").exists());
}

#[test]
fn perfect_ancestor_is_solved_at_generation_zero() {
    let dir = tempfile::tempdir().unwrap();
    let text = K2.replace("generations = 20", "generations = 20\nancestor = \"perfect\"");
    let config = write_config(dir.path(), &text);
    let out = sgpvm(dir.path(), &["evolve", &config, "--out-dir", "run"]);
    assert!(out.status.success());
    let summary = fs::read_to_string(dir.path().join("run/summary.csv")).unwrap();
    assert_eq!(summary, format!("{SUMMARY_HEADER}\n0,true,0\n1,true,0\n2,true,0\n"));
}

#[test]
fn repeated_runs_have_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &K2.replace("k = 2", "k = 8"));
    for run in ["a", "b"] {
        assert!(sgpvm(dir.path(), &["evolve", &config, "--out-dir", run]).status.success());
    }
    let a = fs::read(dir.path().join("a/summary.csv")).unwrap();
    let b = fs::read(dir.path().join("b/summary.csv")).unwrap();
    assert_eq!(a, b);
    let a = fs::read(dir.path().join("a/replicate_1_history.csv")).unwrap();
    let b = fs::read(dir.path().join("b/replicate_1_history.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &K2.replace("k = 2", "k = 8"));
    assert!(sgpvm(dir.path(), &["evolve", &config, "--out-dir", "a"]).status.success());
    assert!(sgpvm(dir.path(), &["--seed", "99", "evolve", &config, "--out-dir", "b"]).status.success());
    let load = |d: &str| match Manifest::load(&dir.path().join(d).join("manifest.json")).unwrap() {
        Manifest::Evolve(m) => m,
        Manifest::Bench(_) => panic!("expected an evolve manifest"),
    };
    assert_ne!(load("a").replicate_seeds, load("b").replicate_seeds);
    assert!(load("b").config.contains("seed = 99"));
}

#[test]
fn replay_reproduces_every_replicate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &K2.replace("k = 2", "k = 4"));
    assert!(sgpvm(dir.path(), &["--backend", "flex", "evolve", &config, "--out-dir", "run"]).status.success());
    for i in ["0", "1", "2"] {
        let out = sgpvm(dir.path(), &["replay", "run/manifest.json", "--replicate", i]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let original = fs::read(dir.path().join(format!("run/replicate_{i}_history.csv"))).unwrap();
        let replayed = fs::read(dir.path().join(format!("run/replay_replicate_{i}_history.csv"))).unwrap();
        assert_eq!(original, replayed);
    }
}

#[test]
fn replay_rejects_bad_index_tampering_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &K2.replace("k = 2", "k = 4"));
    assert!(sgpvm(dir.path(), &["evolve", &config, "--out-dir", "run"]).status.success());

    let out = sgpvm(dir.path(), &["replay", "run/manifest.json", "--replicate", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));

    let path = dir.path().join("run/manifest.json");
    let original = fs::read_to_string(&path).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&original).unwrap();
    let seed = json["replicate_seeds"][0].as_u64().unwrap();
    json["replicate_seeds"][0] = serde_json::Value::from(seed ^ 1);
    fs::write(&path, json.to_string()).unwrap();
    let out = sgpvm(dir.path(), &["replay", "run/manifest.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum mismatch"));

    let mut json: serde_json::Value = serde_json::from_str(&original).unwrap();
    json["version"] = serde_json::Value::from("0.0.0-other");
    fs::write(&path, json.to_string()).unwrap();
    let out = sgpvm(dir.path(), &["replay", "run/manifest.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &K2.replace("k = 2", "k = 40"));
    assert_eq!(sgpvm(dir.path(), &["evolve", &bad]).status.code(), Some(1));
    assert_eq!(sgpvm(dir.path(), &["evolve", "missing.toml"]).status.code(), Some(1));
    assert_eq!(sgpvm(dir.path(), &["bench", "--agents", "0"]).status.code(), Some(1));
    assert_eq!(sgpvm(dir.path(), &["bench", "--benchmark", "loops"]).status.code(), Some(1));
    assert_eq!(sgpvm(dir.path(), &["--backend", "turbo", "bench"]).status.code(), Some(1));
    assert_eq!(sgpvm(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(sgpvm(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn bench_defaults_to_bench_csv_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgpvm(
        dir.path(),
        &["bench", "--benchmark", "control", "--benchmark", "nop", "--agents", "1,2,3,4", "--min-time-ms", "1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    // 2 benchmarks x 2 backends x 4 agent counts x 20 replicates
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 4 * 20);
    let speedup = fs::read_to_string(dir.path().join("bench_speedup.csv")).unwrap();
    assert_eq!(speedup.lines().count(), 1 + 2 * 4);

    let out = sgpvm(dir.path(), &["replay", "bench_manifest.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(dir.path().join("bench_workload.csv")).unwrap(),
        fs::read(dir.path().join("replay_bench_workload.csv")).unwrap()
    );
}

#[test]
fn bench_backend_flag_limits_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgpvm(
        dir.path(),
        &["--backend", "lite", "--out-dir", "b", "bench", "--benchmark", "arithmetic", "--agents", "1", "--replicates", "3", "--min-time-ms", "1", "--out", "t.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("b/t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("arithmetic,lite,")));
    let speedup = fs::read_to_string(dir.path().join("b/t_speedup.csv")).unwrap();
    assert_eq!(speedup, "Library,num agents,Speedup\narithmetic,1,NA\n");
}
