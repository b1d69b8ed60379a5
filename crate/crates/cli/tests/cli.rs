use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use towerforge::{is_k_standard, IntervalSet, StandardTower};

fn towerforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_towerforge"))
        .args(args)
        .env_remove("TOWERFORGE_MAX_DEPTH")
        .output()
        .expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = towerforge(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("towerforge-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn build_tower_heights_are_n_or_n_plus_one() {
    let r = report(&[
        "build-tower", "--preset", "hajian-kakutani", "--K", "0/1:1/1", "--N", "3", "--depth", "6",
    ]);
    let heights: Vec<u64> = serde_json::from_value(r["result"]["heights"].clone()).unwrap();
    assert!(heights.iter().all(|h| *h == 3 || *h == 4));
    let tower = StandardTower::from_json(&r["result"]["tower"].to_string()).unwrap();
    assert!(is_k_standard(&tower, &IntervalSet::parse("0/1:1/1").unwrap()).ok);
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn uniformity_reports_a_verdict() {
    let r = report(&[
        "uniformity", "--preset", "hajian-kakutani", "--C", "0/1:1/2", "--K", "0/1:1/1", "--eps", "1/10",
        "--samples", "16",
    ]);
    assert_eq!(r["result"]["uniform"], true);
    assert_eq!(r["result"]["verdict"]["epsilon"], "1/10");
    assert_eq!(r["config"]["epsilon"], serde_json::json!([1, 10]));
}

#[test]
fn malformed_interval_exits_2() {
    let out = towerforge(&["build-tower", "--K", "0/1-1", "--N", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error(&out)["error"], "Parse");
}

#[test]
fn unknown_preset_exits_2() {
    let out = towerforge(&["build-tower", "--preset", "no-such-system", "--N", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error(&out)["error"], "UnknownPreset");
}

#[test]
fn shallow_stage_exits_3() {
    let out = towerforge(&["build-tower", "--N", "200", "--depth", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error(&out)["exit_code"], 3);
}

#[test]
fn depth_cap_is_enforced() {
    let out = Command::new(env!("CARGO_BIN_EXE_towerforge"))
        .args(["build-tower", "--N", "3", "--depth", "7"])
        .env("TOWERFORGE_MAX_DEPTH", "6")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error(&out)["error"], "DepthCap");
}

#[test]
fn presets_are_listed_stably() {
    let a = towerforge(&["list-presets"]);
    let b = towerforge(&["list-presets"]);
    assert_eq!(a.stdout, b.stdout);
    let list: Value = serde_json::from_slice(&a.stdout).unwrap();
    let names: Vec<&str> = list.as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"hajian-kakutani"));
    assert!(names.len() >= 2);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let args = ["stats", "--C", "0/1:1/4", "--samples", "8", "--horizons", "16,64", "--depth", "7"];
    assert_eq!(towerforge(&args).stdout, towerforge(&args).stdout);
}

#[test]
fn saved_configs_replay() {
    let cfg = scratch("stats-config.json");
    let csv = scratch("stats.csv");
    let plot = scratch("stats.plot");
    let direct = towerforge(&[
        "stats", "--C", "0/1:1/2", "--samples", "6", "--depth", "7",
        "--save-config", cfg.to_str().unwrap(),
        "--csv", csv.to_str().unwrap(),
        "--plot", plot.to_str().unwrap(),
    ]);
    assert!(direct.status.success());
    let replay = towerforge(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(direct.stdout, replay.stdout);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("point,N,hit_count,ratio_num,ratio_den,deviation\n"));
    assert_eq!(table.lines().count(), 7);
    assert!(std::fs::read_to_string(&plot).unwrap().lines().count() > 1);
}

#[test]
fn uniformize_writes_logs_and_partition() {
    let log = scratch("steps.jsonl");
    let part = scratch("final.json");
    let r = report(&[
        "uniformize", "--depth", "8", "--eps", "1/2", "--steps", "2", "--samples", "8",
        "--log", log.to_str().unwrap(),
        "--partition-out", part.to_str().unwrap(),
    ]);
    assert_eq!(r["result"]["telescopes"], true);
    let lines = std::fs::read_to_string(&log).unwrap();
    assert_eq!(lines.lines().count(), 2);
    for line in lines.lines() {
        let step: Value = serde_json::from_str(line).unwrap();
        assert!(step["d_increment"].is_string());
    }
    let saved = towerforge::Partition::from_json(&std::fs::read_to_string(&part).unwrap()).unwrap();
    assert_eq!(saved.alphabet_size(), 2);
}

#[test]
fn refining_mode_keeps_k() {
    let r = report(&[
        "uniformize", "--depth", "8", "--atoms", "0/1:1/2;1/2:1/1", "--beta-atoms", "0/1:1/1",
        "--steps", "2", "--samples", "8",
    ]);
    assert_eq!(r["result"]["refines_beta"], true);
}

#[test]
fn radon_check_and_bratteli_export() {
    let r = report(&["radon-check", "--depth", "9", "--A", "2.2", "--A", "1.2@-1", "--walks", "8"]);
    assert_eq!(r["result"]["consistent"], true);
    let dot = scratch("diagram.dot");
    let b = report(&["export-bratteli", "--depth", "6", "--levels", "4", "--dot", dot.to_str().unwrap()]);
    assert_eq!(b["result"]["vershik"]["injective"], true);
    assert_eq!(b["result"]["path_counts"][4][0], "64");
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph"));
}

#[test]
fn subshift_lists_words() {
    let r = report(&["subshift", "--depth", "8", "--word-length", "3"]);
    assert_eq!(r["result"]["audit"]["failures"], serde_json::json!([]));
    assert_eq!(r["result"]["languages"][0]["count"], 2);
}
