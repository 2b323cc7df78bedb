// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration files.
//!
//! A file is TOML with optional `include = ["other.toml", ...]` at the top
//! level; included files are merged first, in order, and the including file
//! overrides them table by table. The merged document is then laid over the
//! chosen preset, so a file only needs the keys it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::presets::{preset_ablation, Scale};
use crate::error::{Error, Result};
use crate::learner::LearnConfig;
use crate::renderer::CameraConfig;
use crate::session::{ReplayBuffer, SessionConfig};
use crate::worldgen::BackgroundTier;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub preset: String,
    pub scale: Scale,
    pub total_steps: u64,
    pub eval_period: u64,
    /// Evaluations averaged per seed for the summary.
    pub final_window: usize,
    pub seeds: Vec<u64>,
    /// One run per entry; overrides `learner.latent_dim`.
    pub latent_dims: Vec<usize>,
    /// Play sessions recorded before the first gradient step.
    pub warmup_episodes: usize,
    pub buffer_capacity: usize,
    /// Also probe the untrained encoder, logged as step 0.
    pub evaluate_at_start: bool,
    pub save_checkpoint: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            preset: "baseline".into(),
            scale: Scale::Desk,
            total_steps: 20_000,
            eval_period: 1_000,
            final_window: 10,
            seeds: vec![0, 1, 2],
            latent_dims: vec![20],
            warmup_episodes: 10,
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            evaluate_at_start: true,
            save_checkpoint: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub tier: BackgroundTier,
    /// Object slots (and backgrounds) of each play location.
    pub slots_per_location: Vec<usize>,
    pub catalog_size: usize,
    pub textured_fraction: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            tier: BackgroundTier::FullRoom,
            slots_per_location: vec![6],
            catalog_size: 6,
            textured_fraction: 0.5,
        }
    }
}

impl WorldConfig {
    pub fn total_backgrounds(&self) -> usize {
        self.slots_per_location.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Frames per probe dataset (validation and test each).
    pub probe_size: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { probe_size: 1200 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: RunSection,
    pub world: WorldConfig,
    pub camera: CameraConfig,
    pub session: SessionConfig,
    pub learner: LearnConfig,
    pub evaluation: EvaluationConfig,
}

fn invalid(key: &str, message: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{key}: {message}"))
}

/// Prefixes a sub-config validation error with the dotted key of the first
/// field of `section` the message mentions, so it can be traced to a line.
fn scoped<T: Serialize>(section: &str, value: &T, result: Result<()>) -> Result<()> {
    let Err(Error::InvalidConfig(message)) = result else {
        return result;
    };
    let mut keys = Vec::new();
    if let Ok(Value::Table(t)) = Value::try_from(value) {
        collect_keys(section, &t, &mut keys);
    }
    let mentioned = |key: &String| {
        let field = key.rsplit('.').next().unwrap_or(key);
        message
            .split(|c: char| !(c.is_alphanumeric() || c == '_'))
            .any(|w| w == field)
    };
    let key = keys.into_iter().find(mentioned).unwrap_or_else(|| section.to_string());
    let message = message.strip_prefix(&format!("{section}: ")).unwrap_or(&message).to_string();
    Err(invalid(&key, message))
}

fn collect_keys(prefix: &str, table: &Table, out: &mut Vec<String>) {
    for (k, v) in table {
        let key = format!("{prefix}.{k}");
        match v {
            Value::Table(t) => collect_keys(&key, t, out),
            _ => out.push(key),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.total_steps == 0 {
            return Err(invalid("experiment.total_steps", "must be positive"));
        }
        if e.eval_period == 0 || !e.total_steps.is_multiple_of(e.eval_period) {
            return Err(invalid(
                "experiment.eval_period",
                format!("{} must divide total_steps = {}", e.eval_period, e.total_steps),
            ));
        }
        if e.seeds.is_empty() {
            return Err(invalid("experiment.seeds", "at least one seed is required"));
        }
        if e.latent_dims.is_empty() || e.latent_dims.contains(&0) {
            return Err(invalid("experiment.latent_dims", "needs positive entries"));
        }
        if e.final_window == 0 {
            return Err(invalid("experiment.final_window", "must be positive"));
        }
        if e.warmup_episodes == 0 {
            return Err(invalid("experiment.warmup_episodes", "must be positive"));
        }
        let w = &self.world;
        if w.slots_per_location.is_empty() || w.slots_per_location.contains(&0) {
            return Err(invalid("world.slots_per_location", "every location needs a slot"));
        }
        let max_slots = *w.slots_per_location.iter().max().expect("non-empty");
        if w.catalog_size < max_slots.max(2) {
            return Err(invalid(
                "world.catalog_size",
                format!("{} toys cannot fill {max_slots} slots", w.catalog_size),
            ));
        }
        if !(0.0..=1.0).contains(&w.textured_fraction) {
            return Err(invalid("world.textured_fraction", "must lie in [0, 1]"));
        }
        if self.evaluation.probe_size < 10 {
            return Err(invalid("evaluation.probe_size", "must be at least 10"));
        }
        let min_buffer = 2 * self.learner.batch_size;
        if e.buffer_capacity < min_buffer {
            return Err(invalid("experiment.buffer_capacity", format!("must hold at least {min_buffer} frames")));
        }
        scoped("camera", &self.camera, self.camera.validate())?;
        scoped("session", &self.session, self.session.validate())?;
        scoped("learner", &self.learner, self.learner.validate())?;
        Ok(())
    }

    /// Every field, defaults included, as TOML.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }
}

/// A parsed file plus everything it includes, merged.
struct Layer {
    path: PathBuf,
    text: String,
    table: Table,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn read_layers(path: &Path, depth: usize, out: &mut Vec<Layer>) -> Result<()> {
    if depth > 8 {
        return Err(Error::InvalidConfig(format!("{}: includes nested too deeply", path.display())));
    }
    let text = std::fs::read_to_string(path)?;
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigSyntax {
        path: path.display().to_string(),
        line: e.span().map_or(1, |s| line_of(&text, s.start)),
        message: e.message().to_string(),
    })?;
    if let Some(inc) = table.remove("include") {
        let list = match inc {
            Value::String(s) => vec![s],
            Value::Array(items) => items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s),
                    _ => Err(()),
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::ConfigSyntax {
                    path: path.display().to_string(),
                    line: locate_key(&text, "include").unwrap_or(1),
                    message: "include must be a string or a list of strings".into(),
                })?,
            _ => {
                return Err(Error::ConfigSyntax {
                    path: path.display().to_string(),
                    line: locate_key(&text, "include").unwrap_or(1),
                    message: "include must be a string or a list of strings".into(),
                })
            }
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for rel in list {
            read_layers(&base.join(rel), depth + 1, out)?;
        }
    }
    out.push(Layer { path: path.to_path_buf(), text, table });
    Ok(())
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// is replaced.
pub fn deep_merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => deep_merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Line of `dotted` (e.g. `learner.temperature`) in a TOML source, found by
/// scanning table headers and keys.
pub fn locate_key(text: &str, dotted: &str) -> Option<usize> {
    let (table, key) = match dotted.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", dotted),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == dotted {
                header_line = Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim().trim_matches('"');
        let full = if current.is_empty() { k.to_string() } else { format!("{current}.{k}") };
        if full == dotted || (current == table && k == key) {
            return Some(i + 1);
        }
    }
    header_line
}

/// Best-effort key path for an error message: the first backquoted word.
fn key_in_message(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

/// Attributes a configuration error to the line that caused it, searching
/// the files from the most specific (last merged) to the least.
fn attribute(layers: &[Layer], key: Option<&str>, message: String) -> Error {
    let last = layers.last().expect("at least one file");
    if let Some(key) = key {
        for layer in layers.iter().rev() {
            let field = key.rsplit('.').next().unwrap_or(key);
            let position = |pred: &dyn Fn(&str, &str) -> bool| {
                layer.text.lines().position(|l| l.split_once('=').is_some_and(|(k, v)| pred(k.trim(), v.trim())))
            };
            let hit = locate_key(&layer.text, key).or_else(|| {
                // unqualified field names from serde, then the offending
                // value serde quotes for unknown variants
                position(&|k, _| k == field)
                    .or_else(|| position(&|_, v| v.trim_matches('"') == key))
                    .map(|i| i + 1)
            });
            if let Some(line) = hit {
                return Error::ConfigSyntax { path: layer.path.display().to_string(), line, message };
            }
        }
    }
    Error::ConfigSyntax { path: last.path.display().to_string(), line: 1, message }
}

/// Reads `path` (and its includes), picks the preset (`preset_override`,
/// else the file's `experiment.preset`, else `baseline`) at the file's
/// scale, overlays the file, and validates the result.
pub fn load_experiment_config(path: &Path, preset_override: Option<&str>) -> Result<ExperimentConfig> {
    let mut layers = Vec::new();
    read_layers(path, 0, &mut layers)?;
    let mut merged = Table::new();
    for layer in &layers {
        deep_merge(&mut merged, layer.table.clone());
    }
    let get_str = |section: &str, key: &str| {
        merged.get(section).and_then(|s| s.get(key)).and_then(Value::as_str).map(str::to_string)
    };
    let scale = match get_str("experiment", "scale") {
        Some(s) => s
            .parse::<Scale>()
            .map_err(|m| attribute(&layers, Some("experiment.scale"), m))?,
        None => Scale::Desk,
    };
    let preset = preset_override
        .map(str::to_string)
        .or_else(|| get_str("experiment", "preset"))
        .unwrap_or_else(|| "baseline".into());
    let base = preset_ablation(&preset, scale).map_err(|e| match e {
        Error::InvalidConfig(m) if preset_override.is_none() => attribute(&layers, Some("experiment.preset"), m),
        other => other,
    })?;
    let mut resolved = Value::try_from(&base)
        .ok()
        .and_then(|v| v.as_table().cloned())
        .expect("config serializes to a table");
    deep_merge(&mut resolved, merged);
    if let Some(Value::Table(exp)) = resolved.get_mut("experiment") {
        exp.insert("preset".into(), Value::String(preset.clone()));
    }
    let cfg: ExperimentConfig = Value::Table(resolved).try_into().map_err(|e: toml::de::Error| {
        let message = e.message().to_string();
        let key = key_in_message(&message);
        attribute(&layers, key.as_deref(), message)
    })?;
    cfg.validate().map_err(|e| match e {
        Error::InvalidConfig(m) => {
            let key = m.split(':').next().map(str::trim).map(str::to_string);
            attribute(&layers, key.as_deref(), m)
        }
        other => other,
    })?;
    Ok(cfg)
}
