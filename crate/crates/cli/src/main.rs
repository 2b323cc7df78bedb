// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evlab::experiment::{
    emit_report, load_experiment_config, preset_ablation, run_experiment, summary_table, RunOptions, Scale, PRESETS,
};
use evlab::learner::{finite_difference_check, GRADIENT_CHECKS};

/// Overrides the worker-thread count for rendering and feature extraction.
const THREADS_ENV: &str = "EVLAB_THREADS";

#[derive(Parser)]
#[command(name = "evlab", version, about = "Embodied time-contrastive learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate as described by a config file.
    Run {
        config: PathBuf,
        /// Preset to start from, overriding `experiment.preset`.
        #[arg(long)]
        preset: Option<String>,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: runs/<preset>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Single-threaded execution.
        #[arg(long)]
        deterministic: bool,
    },
    /// Rebuild the summary table and plots of a run directory.
    Report { dir: PathBuf },
    /// List presets, or print one fully resolved.
    Presets {
        name: Option<String>,
        #[arg(long, default_value = "desk")]
        scale: String,
    },
    /// Compare analytic gradients with finite differences.
    CheckGradients,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<evlab::Error> for Failure {
    fn from(e: evlab::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, preset, seed, out, deterministic } => {
            let mut cfg = load_experiment_config(&config, preset.as_deref())?;
            if let Some(seed) = seed {
                cfg.experiment.seeds = vec![seed];
            }
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.experiment.preset));
            let report = run_experiment(&cfg, &out, &RunOptions { deterministic })?;
            print!("{}", summary_table(&report.summary));
            println!("results in {}", report.dir.display());
        }
        Command::Report { dir } => match emit_report(&dir)? {
            Some(files) => {
                for f in files {
                    println!("{}", f.display());
                }
            }
            None => eprintln!("warning: {} has no results; nothing written", dir.display()),
        },
        Command::Presets { name, scale } => {
            let scale: Scale = scale.parse().map_err(Failure::Config)?;
            match name {
                Some(name) => print!("{}", preset_ablation(&name, scale)?.to_toml_string()),
                None => {
                    for (name, about) in PRESETS {
                        println!("{name:<16} {about}");
                    }
                }
            }
        }
        Command::CheckGradients => {
            let mut failed = vec![];
            for op in GRADIENT_CHECKS {
                let tol = match op {
                    "pipeline" | "conv" | "loss" => 1e-3,
                    _ => 1e-6,
                };
                let r = finite_difference_check(op, tol)?;
                println!(
                    "{:<9} max rel err {:.3e} (tol {:.0e}, {} probes, worst {}) {}",
                    op,
                    r.max_rel_error,
                    tol,
                    r.probes,
                    r.worst_tensor,
                    if r.passed() { "ok" } else { "FAIL" }
                );
                if !r.passed() {
                    failed.push(op);
                }
            }
            if !failed.is_empty() {
                return Err(Failure::Runtime(format!("gradient checks failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Ok(n) = std::env::var(THREADS_ENV) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
