// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Configuration-driven experiments: presets, the training/evaluation loop,
//! and reports.

mod config;
mod presets;
mod report;
mod runner;

pub use config::{deep_merge, load_experiment_config, locate_key, EvaluationConfig, ExperimentConfig, RunSection, WorldConfig};
pub use presets::{baseline, preset_ablation, preset_names, Scale, PRESETS};
pub use report::{emit_report, find, mean_std, read_csv, summarize, summary_table, CsvRow, SummaryEntry, CSV_HEADER};
pub use runner::{build_run_world, read_run_config, run_experiment, RunOptions, RunReport, RunWorld};
