use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttn-scatter")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, format!("{body}\n[output]\ndir = '{}'\n", dir.join("out").display())).unwrap();
    p.display().to_string()
}

const TINY: &str = r#"
[geometry]
lx = 4

[[packets]]
center = [1, 1]
k_over_pi = [0.5, 0.5]
sigma = 0.8

[evolution]
dt = 0.1
tau_prep = 0.5
t_max = 1.0
measure_every = 2
chi = 4
"#;

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[geometry]\nlx = 4\nbogus = 1\n");
    assert_eq!(cli(&["scatter", "--config", &bad]).status.code(), Some(2));
    assert_eq!(cli(&["scatter", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    let ok = write_config(dir.path(), TINY);
    assert_eq!(cli(&["scatter", "--config", &ok, "--set", "evolution.dt=0"]).status.code(), Some(2));
}

#[test]
fn scatter_writes_series_manifest_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = cli(&["scatter", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["run"]["completed"], true);
    let run = dir.path().join("out");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(run.join("final.snap").exists());
    let series = fs::read_to_string(run.join("series.ndjson")).unwrap();
    assert!(series.lines().all(|l| l.starts_with("{\"v\":1,")));

    let out = cli(&["prepare", "--config", &cfg, "--set", &format!("output.dir='{}'", dir.path().join("prep").display())]);
    assert!(out.status.success());
    assert!(dir.path().join("prep/prepared.snap").exists());
}

#[test]
fn ed_validate_and_spectrum_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[geometry]\nlx = 3\n[model]\ng = 0.5\n");
    let spec = dir.path().join("spectrum.tsv");
    let out = cli(&[
        "ed-validate", "--config", &cfg, "--quench-time", "0.4", "--drift-time", "0.4", "--spectrum",
        spec.to_str().unwrap(), "--levels", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&spec).unwrap();
    assert_eq!(text.lines().next(), Some("# energy\tkx\tky\tdelta_m"));
    assert_eq!(text.lines().count(), 1 + 9 * 2);

    let big = write_config(dir.path(), "[geometry]\nlx = 4\n");
    assert_eq!(cli(&["ed-validate", "--config", &big]).status.code(), Some(4));
}

#[test]
fn dispersion_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[geometry]\nlx = 4\n[model]\ng = 0.5\n[evolution]\ndt = 0.1\ntau_prep = 0.5\nchi = 4\n[dispersion]\nk_over_pi = [[0.0, 0.0], [1.0, 1.0]]\nsigma = 0.8\n",
    );
    let out = cli(&["dispersion", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/dispersion.tsv")).unwrap();
    assert_eq!(text.lines().next(), Some("# kx\tky\tenergy\tg\ttau\tchi"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn resume_finishes_a_checkpointed_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    assert!(cli(&["false-vacuum", "--config", &cfg, "--set", "model.h=0.2"]).status.success());
    let run = dir.path().join("out");
    let full = fs::read(run.join("series.ndjson")).unwrap();
    // the last checkpoint is the end of the ramp, so resume replays the second half
    let out = cli(&["resume", "--dir", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(run.join("series.ndjson")).unwrap(), full);
    assert_eq!(cli(&["resume", "--dir", dir.path().join("missing").to_str().unwrap()]).status.code(), Some(1));
}
