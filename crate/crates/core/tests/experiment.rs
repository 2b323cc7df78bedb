// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use evlab::experiment::{
    baseline, emit_report, load_experiment_config, preset_ablation, preset_names, read_csv, read_run_config,
    run_experiment, summarize, ExperimentConfig, RunOptions, Scale,
};

fn flatten(prefix: &str, v: &toml::Value, out: &mut BTreeMap<String, toml::Value>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn flat(cfg: &ExperimentConfig) -> BTreeMap<String, toml::Value> {
    let mut out = BTreeMap::new();
    flatten("", &toml::from_str(&cfg.to_toml_string()).unwrap(), &mut out);
    out
}

fn changed_keys(name: &str, scale: Scale) -> BTreeSet<String> {
    let base = flat(&baseline(scale));
    let preset = flat(&preset_ablation(name, scale).unwrap());
    assert_eq!(base.keys().collect::<Vec<_>>(), preset.keys().collect::<Vec<_>>());
    base.iter().filter(|(k, v)| preset[*k] != **v).map(|(k, _)| k.clone()).collect()
}

fn documented(name: &str) -> &'static [&'static str] {
    match name {
        "baseline" | "full-room" | "backgrounds-6" => &[],
        "white" | "empty-room" | "parquet" => &["world.tier"],
        "white-single" => &["world.tier", "session.single_background"],
        "backgrounds-10" | "backgrounds-16" => &["world.slots_per_location"],
        "closer" => &["session.distance_factor"],
        "saccade-1" | "saccade-2" => &["session.saccade.amplitude_deg"],
        "aperture-1" | "aperture-2" | "aperture-3" | "aperture-5" => &["session.aperture.aperture_number"],
        "foveation-s1" | "foveation-s2" => &["session.foveation.enabled", "session.saccade.amplitude_deg"],
        "foveation-s3" => &["session.foveation.enabled"],
        "all" => &[
            "session.foveation.enabled",
            "session.aperture.aperture_number",
            "session.distance_factor",
            "session.saccade.amplitude_deg",
        ],
        other => panic!("undocumented preset {other}"),
    }
}

#[test]
fn presets_differ_from_baseline_only_in_their_factors() {
    for scale in [Scale::Paper, Scale::Desk, Scale::Quick] {
        for name in preset_names() {
            let mut changed = changed_keys(name, scale);
            changed.remove("experiment.preset");
            let want: BTreeSet<String> = documented(name).iter().map(|s| s.to_string()).collect();
            assert_eq!(changed, want, "{name} at {scale}");
        }
    }
}

#[test]
fn preset_examples_resolve_as_documented() {
    let b = preset_ablation("baseline", Scale::Desk).unwrap();
    assert!(!b.session.foveation.enabled);
    assert_eq!(b.session.aperture.aperture_number, 20.0);
    assert_eq!(b.session.distance_factor.get(), 1.0);
    assert_eq!(b.session.saccade.amplitude_deg, 3.0);
    let all = preset_ablation("all", Scale::Desk).unwrap();
    assert!(all.session.foveation.enabled);
    assert_eq!(all.session.aperture.aperture_number, 4.0);
    assert_eq!(all.session.distance_factor.get(), 0.7);
    assert_eq!(all.session.saccade.amplitude_deg, 1.0);
    assert_eq!(preset_ablation("closer", Scale::Desk).unwrap().session.distance_factor.get(), 0.7);
    assert_eq!(preset_ablation("backgrounds-16", Scale::Desk).unwrap().world.total_backgrounds(), 16);
    assert_eq!(preset_ablation("baseline", Scale::Paper).unwrap().experiment.total_steps, 400_000);
    let desk = baseline(Scale::Desk);
    assert_eq!(desk.experiment.total_steps / desk.experiment.eval_period, 20);
    assert_eq!(desk.camera.image_size, 64);
    assert_eq!(desk.learner.batch_size, 32);
}

#[test]
fn config_files_layer_over_presets() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("common.toml"), "[experiment]\nscale = \"quick\"\nseeds = [4]\n").unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "include = [\"common.toml\"]\n\n[experiment]\npreset = \"closer\"\n\n[learner]\nlatent_dim = 7\n",
    )
    .unwrap();
    let cfg = load_experiment_config(&dir.path().join("run.toml"), None).unwrap();
    assert_eq!(cfg.experiment.scale, Scale::Quick);
    assert_eq!(cfg.experiment.seeds, vec![4]);
    assert_eq!(cfg.camera.image_size, 32);
    assert_eq!(cfg.session.distance_factor.get(), 0.7);
    assert_eq!(cfg.learner.latent_dim, 7);
    let white = load_experiment_config(&dir.path().join("run.toml"), Some("white")).unwrap();
    assert_eq!(white.session.distance_factor.get(), 1.0);
    assert_eq!(white.experiment.preset, "white");
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[experiment]\nscale = \"quick\"\n\n[session]\nepisode_length = 95\n").unwrap();
    let err = load_experiment_config(&path, None).unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains(":5"), "{err}");
    std::fs::write(&path, "[experiment]\ntotal_steps = 1000\neval_period = 300\n").unwrap();
    let err = load_experiment_config(&path, None).unwrap_err().to_string();
    assert!(err.contains(":3") || err.contains(":2"), "{err}");
    std::fs::write(&path, "[world]\ntier = \"castle\"\n").unwrap();
    assert!(load_experiment_config(&path, None).unwrap_err().to_string().contains(":2"));
    std::fs::write(&path, "[experiment]\npreset = \"nope\"\n").unwrap();
    assert!(load_experiment_config(&path, None).unwrap_err().to_string().contains("foveation-s3"));
}

fn tiny(preset: &str) -> ExperimentConfig {
    let mut cfg = preset_ablation(preset, Scale::Quick).unwrap();
    cfg.camera.image_size = 16;
    cfg.experiment.total_steps = 12;
    cfg.experiment.eval_period = 4;
    cfg.experiment.final_window = 2;
    cfg.experiment.seeds = vec![0, 1];
    cfg.experiment.latent_dims = vec![8, 12];
    cfg.experiment.warmup_episodes = 1;
    cfg.learner.batch_size = 4;
    cfg.evaluation.probe_size = 36;
    cfg
}

#[test]
fn tiny_run_writes_replayable_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny("white");
    let report = run_experiment(&cfg, &dir.path().join("a"), &RunOptions { deterministic: true }).unwrap();
    let rows = read_csv(&report.dir.join("results.csv")).unwrap();
    assert_eq!(rows, report.rows);
    for seed in [0, 1] {
        for dim in [8, 12] {
            for metric in ["voa", "toa", "vba", "tba"] {
                let n = rows.iter().filter(|r| r.seed == seed && r.latent_dim == dim && r.metric == metric).count();
                assert_eq!(n, 4, "step 0 plus 3 periodic evaluations of {metric}");
            }
            let losses = rows.iter().filter(|r| r.seed == seed && r.latent_dim == dim && r.metric == "train_loss");
            assert_eq!(losses.count(), 3);
        }
    }
    assert!(rows.iter().filter(|r| r.metric != "train_loss").all(|r| (0.0..=1.0).contains(&r.value)));

    // independent aggregation: last two periodic evaluations per seed, then across seeds
    for entry in &report.summary {
        let mut per_seed = vec![];
        for seed in [0u64, 1] {
            let mut vals: Vec<(u64, f64)> = rows
                .iter()
                .filter(|r| r.seed == seed && r.latent_dim == entry.latent_dim && r.metric == entry.metric && r.step > 0)
                .map(|r| (r.step, r.value))
                .collect();
            vals.sort_by_key(|v| v.0);
            let tail = &vals[vals.len() - 2..];
            per_seed.push(tail.iter().map(|v| v.1).sum::<f64>() / 2.0);
        }
        let mean = per_seed.iter().sum::<f64>() / 2.0;
        let std = (per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((entry.mean - mean).abs() <= 1e-12 && (entry.std - std).abs() <= 1e-12, "{}", entry.metric);
    }
    assert_eq!(summarize(&rows, 2), report.summary);

    let replay = read_run_config(&report.dir).unwrap();
    assert_eq!(replay, cfg);
    let again = run_experiment(&replay, &dir.path().join("b"), &RunOptions { deterministic: true }).unwrap();
    let a = std::fs::read(report.dir.join("results.csv")).unwrap();
    let b = std::fs::read(again.dir.join("results.csv")).unwrap();
    assert_eq!(a, b);

    let files = emit_report(&report.dir).unwrap().unwrap();
    let step_plot = files.iter().find(|f| f.ends_with("voa_vs_step.svg")).unwrap();
    let svg = std::fs::read_to_string(step_plot).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.contains("std-band"));
    assert!(files.iter().any(|f| f.ends_with("voa_vs_latent_dim.svg")));
    assert!(files.iter().any(|f| f.ends_with("summary.txt")));
    let meta = std::fs::read_to_string(report.dir.join("metadata.toml")).unwrap();
    assert!(meta.contains("code_version") && meta.contains("total_steps = 12"));
}

#[test]
fn empty_results_produce_no_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("results.csv"), "preset,seed,step,latent_dim,metric,value\n").unwrap();
    assert_eq!(emit_report(dir.path()).unwrap(), None);
}

#[test]
fn single_seed_bands_have_zero_width() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("baseline");
    cfg.experiment.seeds = vec![3];
    cfg.experiment.latent_dims = vec![8];
    let report = run_experiment(&cfg, dir.path(), &RunOptions { deterministic: true }).unwrap();
    assert!(report.summary.iter().all(|e| e.std == 0.0 && e.per_seed.len() == 1));
}
