// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngCore;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::report::{summarize, CsvRow, SummaryEntry, CSV_HEADER};
use crate::error::{Error, Result};
use crate::evaluation::{build_probe_dataset, probe_report, ProbeDataset, Split};
use crate::learner::{save_checkpoint, train_step, EncoderParams, LearnConfig, OptimizerState};
use crate::renderer::RetinalFrame;
use crate::rng::{seeded, stream};
use crate::session::{run_play_session, ReplayBuffer};
use crate::worldgen::{build_house, generate_object_catalog, SceneGraph, ToyObject};
use crate::Real;

/// Everything a run derives from its seed.
pub struct RunWorld {
    pub catalog: Vec<ToyObject>,
    pub house: SceneGraph,
    pub test_house: SceneGraph,
    pub validation: ProbeDataset,
    pub test: ProbeDataset,
}

pub fn build_run_world(cfg: &ExperimentConfig, seed: u64) -> Result<RunWorld> {
    let w = &cfg.world;
    let catalog = generate_object_catalog(
        w.catalog_size,
        w.textured_fraction,
        seeded(seed, stream::CATALOG).next_u64(),
    )?;
    let mut house_rng = seeded(seed, stream::HOUSE);
    let n = w.slots_per_location.len();
    let house = build_house(n, w.tier, &w.slots_per_location, house_rng.next_u64())?;
    let test_house = build_house(n, w.tier, &w.slots_per_location, house_rng.next_u64())?;
    let mut probe_rng = seeded(seed, stream::PROBE_DATA);
    let size = cfg.evaluation.probe_size;
    let validation = build_probe_dataset(
        Split::Validation,
        &house,
        &catalog,
        &cfg.session,
        &cfg.camera,
        size,
        probe_rng.next_u64(),
    )?;
    let test = build_probe_dataset(
        Split::Test,
        &test_house,
        &catalog,
        &cfg.session,
        &cfg.camera,
        size,
        probe_rng.next_u64(),
    )?;
    Ok(RunWorld { catalog, house, test_house, validation, test })
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Run on one thread and record it in the metadata.
    pub deterministic: bool,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub rows: Vec<CsvRow>,
    pub summary: Vec<SummaryEntry>,
}

#[derive(Serialize)]
struct SceneRecord {
    seed: u64,
    house_checksum: String,
    test_house_checksum: String,
    validation_checksum: String,
    test_checksum: String,
}

#[derive(Serialize, Default)]
struct Timing {
    runs: Vec<RunTiming>,
}

#[derive(Serialize)]
struct RunTiming {
    seed: u64,
    latent_dim: usize,
    setup_seconds: f64,
    train_seconds: f64,
    eval_seconds: f64,
    steps: u64,
}

struct CsvSink {
    out: BufWriter<File>,
    rows: Vec<CsvRow>,
}

impl CsvSink {
    fn push(&mut self, row: CsvRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_line())?;
        self.rows.push(row);
        Ok(())
    }
}

fn train_one(
    cfg: &ExperimentConfig,
    world: &RunWorld,
    seed: u64,
    latent_dim: usize,
    dir: &Path,
    sink: &mut CsvSink,
) -> Result<RunTiming> {
    let e = &cfg.experiment;
    let learn = LearnConfig { latent_dim, seed, ..cfg.learner.clone() };
    let mut params = EncoderParams::<Real>::from_config(&learn, &mut seeded(seed, stream::INIT));
    let mut opt = OptimizerState::new(&params, &learn);
    let mut session_rng = seeded(seed, stream::SESSION);
    let mut batch_rng = seeded(seed, stream::BATCH);
    let mut buffer = ReplayBuffer::new(e.buffer_capacity);
    let mut episode = 0u64;
    let mut next_episode = |rng: &mut _| -> Result<_> {
        let s = run_play_session(&world.house, &world.catalog, &cfg.session, &cfg.camera, episode, rng)?;
        episode += 1;
        Ok(s)
    };
    let setup = Instant::now();
    for _ in 0..e.warmup_episodes {
        buffer.push_stream(&next_episode(&mut session_rng)?);
    }
    log::info!(
        "{} seed {seed} dim {latent_dim}: warm-up of {} episodes, {} frames",
        e.preset,
        e.warmup_episodes,
        buffer.len()
    );
    let setup_seconds = setup.elapsed().as_secs_f64();
    let (mut train_seconds, mut eval_seconds) = (0.0, 0.0);

    let mut evaluate = |params: &EncoderParams<Real>, step: u64, sink: &mut CsvSink| -> Result<()> {
        let t = Instant::now();
        let report = probe_report(params, &world.validation, &world.test, step, seed)?;
        for (metric, value) in report.metrics() {
            if value.is_finite() {
                sink.push(CsvRow::new(&e.preset, seed, step, latent_dim, metric, value))?;
            }
        }
        sink.out.flush()?;
        eval_seconds += t.elapsed().as_secs_f64();
        log::info!(
            "{} seed {seed} dim {latent_dim} step {step}: voa {:.3} toa {:.3} vba {:.3} tba {:.3}",
            e.preset,
            report.voa,
            report.toa,
            report.vba,
            report.tba
        );
        Ok(())
    };
    if e.evaluate_at_start {
        evaluate(&params, 0, sink)?;
    }

    let mut pending: VecDeque<(u64, usize, RetinalFrame)> = VecDeque::new();
    let mut loss_sum = 0.0;
    for step in 1..=e.total_steps {
        let t = Instant::now();
        if pending.is_empty() {
            let s = next_episode(&mut session_rng)?;
            let id = s.episode_id;
            pending.extend(s.frames.into_iter().map(|f| (id, f.step_index, f.frame)));
        }
        let (id, idx, frame) = pending.pop_front().expect("episode has frames");
        buffer.push_frame(&frame, id, idx);
        let loss = train_step(&buffer, &mut params, &mut opt, &learn, &mut batch_rng)?;
        if !loss.is_finite() {
            return Err(Error::InvalidState(format!("non-finite loss at step {step}")));
        }
        loss_sum += f64::from(loss);
        train_seconds += t.elapsed().as_secs_f64();
        if step % e.eval_period == 0 {
            let mean_loss = loss_sum / e.eval_period as f64;
            loss_sum = 0.0;
            sink.push(CsvRow::new(&e.preset, seed, step, latent_dim, "train_loss", mean_loss))?;
            evaluate(&params, step, sink)?;
        }
    }
    if e.save_checkpoint {
        save_checkpoint(
            &dir.join(format!("checkpoint_seed{seed}_dim{latent_dim}.bin")),
            &params,
            &opt,
            &learn,
        )?;
    }
    Ok(RunTiming {
        seed,
        latent_dim,
        setup_seconds,
        train_seconds,
        eval_seconds,
        steps: e.total_steps,
    })
}

/// Trains and evaluates every (seed, latent size) of `cfg`, writing
/// `results.csv`, `metadata.toml`, `timing.toml` and the report into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let run = || -> Result<RunReport> {
        let mut sink = CsvSink {
            out: BufWriter::new(File::create(out.join("results.csv"))?),
            rows: Vec::new(),
        };
        writeln!(sink.out, "{CSV_HEADER}")?;
        let mut scenes = Vec::new();
        let mut timing = Timing::default();
        for &seed in &cfg.experiment.seeds {
            let t = Instant::now();
            let world = build_run_world(cfg, seed)?;
            let world_seconds = t.elapsed().as_secs_f64();
            scenes.push(SceneRecord {
                seed,
                house_checksum: world.house.checksum(),
                test_house_checksum: world.test_house.checksum(),
                validation_checksum: world.validation.checksum(),
                test_checksum: world.test.checksum(),
            });
            write_metadata(out, cfg, opts, &scenes)?;
            for &dim in &cfg.experiment.latent_dims {
                let mut t = train_one(cfg, &world, seed, dim, out, &mut sink)?;
                t.setup_seconds += world_seconds;
                timing.runs.push(t);
                std::fs::write(out.join("timing.toml"), toml::to_string(&timing).expect("timing serializes"))?;
            }
        }
        sink.out.flush()?;
        let summary = summarize(&sink.rows, cfg.experiment.final_window);
        super::report::emit_report(out)?;
        Ok(RunReport { dir: out.to_path_buf(), rows: sink.rows, summary })
    };
    if opts.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::InvalidState(format!("thread pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    }
}

fn write_metadata(out: &Path, cfg: &ExperimentConfig, opts: &RunOptions, scenes: &[SceneRecord]) -> Result<()> {
    #[derive(Serialize)]
    struct Metadata<'a> {
        code_version: &'a str,
        deterministic: bool,
        config: &'a ExperimentConfig,
        scenes: &'a [SceneRecord],
    }
    let meta = Metadata {
        code_version: env!("CARGO_PKG_VERSION"),
        deterministic: opts.deterministic,
        config: cfg,
        scenes,
    };
    std::fs::write(out.join("metadata.toml"), toml::to_string(&meta).expect("metadata serializes"))?;
    Ok(())
}

/// Reads the resolved configuration back from a run directory.
pub fn read_run_config(dir: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(dir.join("metadata.toml"))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::InvalidInput(format!("metadata.toml: {}", e.message())))?;
    let cfg = table
        .get("config")
        .cloned()
        .ok_or_else(|| Error::InvalidInput("metadata.toml has no [config] table".into()))?;
    cfg.try_into()
        .map_err(|e: toml::de::Error| Error::InvalidInput(format!("metadata.toml: {}", e.message())))
}
