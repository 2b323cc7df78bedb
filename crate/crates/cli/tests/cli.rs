// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn evlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"[experiment]
scale = "quick"
total_steps = 8
eval_period = 4
seeds = [0]
warmup_episodes = 1

[camera]
image_size = 16

[learner]
batch_size = 4
latent_dim = 8

[evaluation]
probe_size = 36
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn presets_are_listed_and_resolved() {
    let o = evlab(&["presets"]);
    assert!(o.status.success());
    let list = stdout(&o);
    for name in ["baseline", "white", "closer", "backgrounds-16", "foveation-s3", "all"] {
        assert!(list.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
    let o = evlab(&["presets", "all", "--scale", "quick"]);
    assert!(o.status.success());
    let toml = stdout(&o);
    assert!(toml.contains("aperture_number = 4.0") && toml.contains("distance_factor = 0.7"));
    assert_eq!(evlab(&["presets", "nope"]).status.code(), Some(2));
    assert_eq!(evlab(&["presets", "all", "--scale", "huge"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[experiment]\nscale = \"quick\"\n\n[learner]\ntemperature = -1.0\n");
    let o = evlab(&["run", &bad, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml:5"), "{}", stderr(&o));
    let broken = write(dir.path(), "broken.toml", "[experiment\n");
    let o = evlab(&["run", &broken]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("broken.toml:1"), "{}", stderr(&o));
    let missing = dir.path().join("missing.toml");
    assert_ne!(evlab(&["run", missing.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn bad_thread_override_exits_2() {
    let o = Command::new(env!("CARGO_BIN_EXE_evlab")).arg("presets").env("EVLAB_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tiny_runs_are_byte_identical_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let mut csvs = vec![];
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = evlab(&["run", &cfg, "--preset", "white", "--seed", "2", "--out", out.to_str().unwrap(), "--deterministic"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("voa"));
        csvs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert!(text.starts_with("preset,seed,step,latent_dim,metric,value\n"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("white,2,")));

    let run_dir = dir.path().join("a");
    std::fs::remove_file(run_dir.join("summary.txt")).unwrap();
    let o = evlab(&["report", run_dir.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(run_dir.join("summary.txt").exists());
    assert!(run_dir.join("toa_vs_step.svg").exists());
}

#[test]
fn report_on_empty_directory_is_a_noop() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("results.csv"), "preset,seed,step,latent_dim,metric,value\n").unwrap();
    let o = evlab(&["report", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn gradient_checks_pass() {
    let o = evlab(&["check-gradients"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with(" ok")).count(), 7);
}
