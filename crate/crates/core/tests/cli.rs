use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use staysynth::pipeline::Manifest;

const TOY: &str = r#"{
  "world": {"n_agents": 200},
  "model": {"embedding_size": 8, "layer_size": 8, "n_layers": 1, "max_length": 24, "context": "streaming"},
  "train": {"epochs": 1, "batch_size": 128, "learning_rate": 0.005, "seed": 3},
  "generation": {"sample_size": 60}
}"#;

fn staysynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_staysynth")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn run_toy(dir: &Path, command: &str) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, TOY).unwrap();
    let out = dir.join("out");
    staysynth(&[command, "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
}

fn outputs(dir: &Path) -> BTreeMap<String, BTreeMap<String, String>> {
    fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("manifest_"))
        .map(|p| {
            let m: Manifest = serde_json::from_slice(&fs::read(&p).unwrap()).unwrap();
            (m.command, m.outputs)
        })
        .collect()
}

#[test]
fn unknown_command_exits_2() {
    let out = staysynth(&["foo"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_inputs_exit_1_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_toy(dir.path(), "train");
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().find(|l| l.starts_with("error: ")).unwrap();
    assert!(line.contains("kind=") && line.contains("msg="), "{line}");
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"train": {"epochs": 1, "batch_size": 0, "learning_rate": 0.01, "seed": 1}}"#).unwrap();
    let out = staysynth(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pipeline_writes_every_report_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run_toy(dir.path(), "pipeline");
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let root = a.path().join("out");
    for name in [
        "records.csv",
        "trajectories.csv",
        "model.ckpt",
        "synthetic_s1.csv",
        "synthetic_s2.csv",
        "utility_table.csv",
        "utility_report.json",
        "privacy_cutoffs.csv",
        "privacy_report.json",
        "qq_synthetic.csv",
    ] {
        assert!(root.join(name).is_file(), "{name} missing");
    }
    assert!(root.join("plots").is_dir());
    let (ma, mb) = (outputs(a.path()), outputs(b.path()));
    assert_eq!(ma.len(), 8);
    assert_eq!(ma, mb);
    for (name, hash) in &ma["generate"] {
        assert_eq!(&staysynth::pipeline::sha256_file(&root.join(name)).unwrap(), hash);
    }
}

#[test]
fn export_plots_rejects_out_of_range_index() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_toy(dir.path(), "pipeline").status.success());
    let cfg = dir.path().join("config.json");
    let out_dir = dir.path().join("out");
    let out = staysynth(&[
        "export-plots",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--indices",
        "100000",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
