use std::path::Path;
use std::process::{Command, Output};

use pcmu_cli::io::{read_tradeoff, read_trajectories};

const SMALL: &str = "\
[train]
episodes = 12
[data.synthetic]
n_episodes = 30
[env]
n_actions = 17
[attacker.load.fit]
epochs = 5
[attacker.occupancy.fit]
epochs = 5
";

fn pcmu(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcmu"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = pcmu(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let dir = workdir();
    let d = dir.path();
    assert_eq!(pcmu(d, &["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(pcmu(d, &["sweep", "--out", "x.csv", "--backends", "nope"]).status.code(), Some(1));
    assert_eq!(pcmu(d, &["--help"]).status.code(), Some(0));

    std::fs::write(d.join("bad.toml"), "[train]\nlamda = 0.5\n").unwrap();
    let out = pcmu(d, &["gen-data", "--config", "bad.toml", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));

    let out = pcmu(d, &["evaluate", "--checkpoint", "missing.ck", "--out", "t.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ck"));
}

#[test]
fn environment_variables_set_flags() {
    let dir = workdir();
    let out = Command::new(env!("CARGO_BIN_EXE_pcmu"))
        .current_dir(dir.path())
        .env("RUST_LOG", "warn")
        .env("PCMU_CONFIG", "small.toml")
        .env("PCMU_OUT", "env.csv")
        .arg("gen-data")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("env.csv").exists());
}

#[test]
fn pipeline_runs_end_to_end_and_reproduces() {
    let dir = workdir();
    let d = dir.path();
    ok(d, &["gen-data", "--config", "small.toml", "--out", "data.csv"]);
    let base = ["--config", "small.toml", "--backend", "flatness", "--lambda", "0.5"];
    ok(d, &[&["train"][..], &base, &["--out-checkpoint", "a.ck", "--log", "a.log.csv"]].concat());
    ok(d, &[&["train"][..], &base, &["--out-checkpoint", "b.ck", "--log", "b.log.csv"]].concat());
    assert_eq!(read(d, "a.ck"), read(d, "b.ck"));
    assert_eq!(read(d, "a.log.csv"), read(d, "b.log.csv"));
    let log = String::from_utf8(read(d, "a.log.csv")).unwrap();
    assert!(log.starts_with("episode,total_reward,epsilon,hnet_loss,wall_ms\n"));
    assert_eq!(log.lines().count(), 13);

    ok(d, &["evaluate", "--checkpoint", "a.ck", "--split", "train,test", "--out", "traj.csv"]);
    let set = read_trajectories(&d.join("traj.csv")).unwrap();
    assert_eq!(set.get("train").unwrap().len(), 21);
    assert_eq!(set.get("test").unwrap().len(), 6);
    assert!(set.get("test").unwrap().iter().all(|t| t.grid_kw.len() == 96 && t.occupancy.is_some()));
    let summary = String::from_utf8(read(d, "traj.csv.summary.csv")).unwrap();
    assert!(summary.starts_with("split,episodes,cost_per_day,ksg_mi_nats\n"));

    ok(d, &["attack", "--config", "small.toml", "--trajectories", "traj.csv", "--out", "attack.csv"]);
    ok(d, &["estimate-mi", "--trajectories", "traj.csv", "--k", "3", "--out", "mi.csv"]);
    ok(d, &["psd", "--trajectory", "traj.csv", "--episode", "0", "--out", "psd.csv"]);
    let psd = String::from_utf8(read(d, "psd.csv")).unwrap();
    assert_eq!(psd.lines().count(), 1 + 17);

    // every output can be regenerated from its manifest
    for name in ["data.csv", "a.ck", "traj.csv", "attack.csv", "mi.csv", "psd.csv"] {
        let manifest = format!("{name}.manifest.toml");
        ok(d, &["replay", "--manifest", &manifest, "--output-root", "again"]);
        assert_eq!(read(d, name), read(&d.join("again"), name), "{name}");
    }
}

#[test]
fn csv_data_source_matches_synthetic_source() {
    let dir = workdir();
    let d = dir.path();
    ok(d, &["gen-data", "--config", "small.toml", "--out", "data.csv"]);
    let mut cfg = pcmu_cli::config::RunConfig::from_toml(SMALL).unwrap();
    let synthetic = pcmu_cli::pipeline::load_episodes(&cfg).unwrap();
    cfg.data.csv = Some(d.join("data.csv"));
    let loaded = pcmu_cli::pipeline::load_episodes(&cfg).unwrap();
    assert_eq!(loaded.len(), synthetic.len());
    for (a, b) in loaded.iter().zip(&synthetic) {
        assert_eq!(a.occupancy, b.occupancy);
        for (x, y) in a.demand_kw.iter().zip(&b.demand_kw) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn sweep_is_independent_of_job_count() {
    let dir = workdir();
    let d = dir.path();
    let args = ["sweep", "--config", "small.toml", "--lambdas", "0,0.5,1", "--backends", "flatness,mi-iid", "--no-attackers"];
    ok(d, &[&args[..], &["--jobs", "1", "--out", "one.csv"]].concat());
    ok(d, &[&args[..], &["--jobs", "3", "--out", "three.csv"]].concat());
    assert_eq!(read(d, "one.csv"), read(d, "three.csv"));
    let rows = read_tradeoff(&d.join("one.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.load_nmse.is_none()));
}

#[test]
fn pure_cost_point_is_cheapest() {
    let dir = workdir();
    let d = dir.path();
    let common = ["sweep", "--config", "small.toml", "--backends", "flatness", "--no-attackers", "--seed", "4"];
    ok(d, &[&common[..], &["--lambdas", "1", "--out", "only.csv"]].concat());
    ok(d, &[&common[..], &["--lambdas", "0,0.5,1", "--out", "full.csv"]].concat());
    let only = read_tradeoff(&d.join("only.csv")).unwrap();
    let full = read_tradeoff(&d.join("full.csv")).unwrap();
    let min = full.iter().map(|r| r.cost_per_day).fold(f64::INFINITY, f64::min);
    assert!(only[0].cost_per_day <= min + 1e-12, "{} vs {min}", only[0].cost_per_day);
}
