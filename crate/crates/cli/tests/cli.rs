use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gfx::report::Table;
use gfx::{run_config, Experiment, RunConfig};
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn gfx(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfx"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("GFX_SEED")
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn cumulant_table_has_closed_form_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = gfx(&["cumulant", "--config", &config("configA.json")], &out);
    assert_eq!(o.status.code(), Some(0));
    let mut rd = csv::Reader::from_path(out.join("cumulant.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["q", "kappa", "kappa_dot", "psi"]);
    let row = rd.records().map(|r| r.unwrap()).find(|r| &r[0] == "2").unwrap();
    assert!((row[1].parse::<f64>().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn snapshot_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = gfx(&["simulate", "--config", &config("configA.json"), "--replicas", "3"], &out);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("snapshot.csv")).unwrap();
    assert!(text.starts_with("replica_id,t,label,mass\r\n"), "{text}");
    assert!(text.lines().count() > 1);
}

#[test]
fn empty_table_is_header_only() {
    let t = Table::new("empty", &["a", "b"]);
    assert_eq!(t.to_csv().unwrap(), b"a,b\r\n");
}

#[test]
fn report_round_trips_and_echoes_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let o = gfx(&["martingale-check", "--config", &config("configA.json"), "--replicas", "200"], &out);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    let echoed = RunConfig::from_value(r["config"].clone()).unwrap();
    let loaded = RunConfig::load(&configs().join("configA.json"), &[("statistics.replicas".into(), "200".into())]).unwrap();
    assert_eq!(echoed, loaded);
    for key in ["simulation", "extinction", "spine", "explosion", "change_of_measure"] {
        assert!(r["config"].get(key).is_some(), "{key} missing from the echo");
    }
    assert!(r["config"]["simulation"]["caps"]["max_particles"].is_number());
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(r["rng"]["seed"], 1);
    assert_eq!(r["rng"]["seed_source"], "config");
    assert!(out.join("timing.json").exists());
}

#[test]
fn seed_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    let o = Command::new(env!("CARGO_BIN_EXE_gfx"))
        .args(["martingale-check", "--config", &config("configA.json"), "--replicas", "10", "--out"])
        .arg(&out)
        .env("GFX_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&out)["rng"]["seed"], 77);
    assert_eq!(report(&out)["rng"]["seed_source"], "env");
    let o = gfx(&["martingale-check", "--config", &config("configA.json"), "--replicas", "10", "--seed", "5"], &out);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&out)["rng"]["seed_source"], "flag");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let a = config("configA.json");
    let b = config("configB.json");
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["cumulant", "--config", "/nonexistent.json"], 2),
        (vec!["cumulant", "--config", &a, "--set", "simulation.bogus=1"], 2),
        (vec!["cumulant", "--config", &a, "--set", "statistics.a=5"], 2),
        (vec!["cumulant", "--config", &a, "--threads"], 2),
        (vec!["spine", "--config", &a, "--replicas", "50", "--set", "statistics.z_max=1e-9"], 0),
        (vec!["spine", "--config", &a, "--replicas", "50", "--set", "statistics.z_max=1e-9", "--assert"], 1),
        (vec!["simulate", "--config", &a, "--replicas", "20", "--set", "simulation.caps.max_particles=1"], 3),
        (vec!["explode", "--config", &b, "--set", "explosion.mode=\"spine\""], 2),
    ];
    for (i, (args, code)) in cases.iter().enumerate() {
        let out = tmp.path().join(format!("x{i}"));
        let o = gfx(args, &out);
        assert_eq!(o.status.code(), Some(*code), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        if *code == 2 {
            assert!(!out.exists(), "{args:?} left output behind");
        }
    }
    let leftovers = std::fs::read_dir(tmp.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains(".partial-"))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn configuration_must_match_the_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gfx(&["couple", "--config", &config("configB.json")], &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn standard_error_shrinks_like_root_n() {
    let base = RunConfig::load(&configs().join("configA.json"), &[]).unwrap();
    let se = |n: usize| {
        let mut cfg = base.clone();
        cfg.statistics.replicas = n;
        cfg.statistics.q = vec![2.0];
        cfg.statistics.t = vec![1.0];
        let o = run_config(Experiment::MartingaleCheck, &cfg, 3, "flag", 1).unwrap();
        o.report.results["estimates"][0]["estimate"]["se"].as_f64().unwrap()
    };
    let s: Vec<f64> = [1_000, 10_000, 100_000].iter().map(|&n| se(n)).collect();
    for w in s.windows(2) {
        let ratio = w[0] / w[1] / 10f64.sqrt();
        assert!((ratio - 1.0).abs() < 0.2, "{s:?}");
    }
}
