// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::renderer::DistanceFactor;
use crate::worldgen::BackgroundTier;

/// Budget of a run. Presets only change the ablated factors; the scale
/// fixes resolution, duration and dataset sizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// 128 px, 400k steps, five seeds.
    Paper,
    /// 64 px, 20k steps, three seeds.
    #[default]
    Desk,
    /// 32 px, 10k steps, three seeds; sized for single-core trend runs.
    Quick,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            "quick" => Ok(Scale::Quick),
            other => Err(format!("unknown scale {other:?}; expected paper, desk or quick")),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
            Scale::Quick => "quick",
        })
    }
}

/// The baseline at a given scale: full room, one location with six
/// backgrounds, clear images (no foveation, aperture 20), saccades of 3°.
pub fn baseline(scale: Scale) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.scale = scale;
    match scale {
        Scale::Paper => {
            cfg.camera.image_size = 128;
            cfg.experiment.total_steps = 400_000;
            cfg.experiment.eval_period = 4_000;
            cfg.experiment.seeds = vec![0, 1, 2, 3, 4];
            cfg.experiment.latent_dims = vec![20, 40, 64, 128];
            cfg.world.catalog_size = 20;
            cfg.evaluation.probe_size = 1200;
        }
        Scale::Desk => {
            cfg.camera.image_size = 64;
            cfg.experiment.total_steps = 20_000;
            cfg.experiment.eval_period = 1_000;
        }
        Scale::Quick => {
            cfg.camera.image_size = 32;
            cfg.experiment.total_steps = 10_000;
            cfg.experiment.eval_period = 1_000;
            cfg.experiment.final_window = 3;
            cfg.evaluation.probe_size = 600;
        }
    }
    cfg
}

pub const PRESETS: &[(&str, &str)] = &[
    ("baseline", "full room, 6 backgrounds, no foveation, aperture 20, S = 3"),
    ("white", "white void instead of the room"),
    ("empty-room", "untextured walls and floor"),
    ("parquet", "untextured walls, parquet floor"),
    ("full-room", "textured walls, parquet, furniture (same as baseline)"),
    ("white-single", "white void, every toy shown in one slot"),
    ("backgrounds-6", "one location, 6 backgrounds"),
    ("backgrounds-10", "two locations, 10 backgrounds"),
    ("backgrounds-16", "four locations, 16 backgrounds"),
    ("closer", "toys at 0.7 of the baseline distance"),
    ("saccade-1", "saccade amplitude 1 degree"),
    ("saccade-2", "saccade amplitude 2 degrees"),
    ("aperture-1", "aperture number 1"),
    ("aperture-2", "aperture number 2"),
    ("aperture-3", "aperture number 3"),
    ("aperture-5", "aperture number 5"),
    ("foveation-s1", "foveation, saccades of 1 degree"),
    ("foveation-s2", "foveation, saccades of 2 degrees"),
    ("foveation-s3", "foveation, saccades of 3 degrees"),
    ("all", "foveation, aperture 4, distance 0.7, saccades of 1 degree"),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Baseline at `scale` with one factor group changed.
pub fn preset_ablation(name: &str, scale: Scale) -> Result<ExperimentConfig> {
    let mut cfg = baseline(scale);
    cfg.experiment.preset = name.to_string();
    let s = &mut cfg.session;
    match name {
        "baseline" | "full-room" | "backgrounds-6" => {}
        "white" => cfg.world.tier = BackgroundTier::White,
        "empty-room" => cfg.world.tier = BackgroundTier::EmptyRoom,
        "parquet" => cfg.world.tier = BackgroundTier::Parquet,
        "white-single" => {
            cfg.world.tier = BackgroundTier::White;
            s.single_background = true;
        }
        "backgrounds-10" => cfg.world.slots_per_location = vec![4, 6],
        "backgrounds-16" => cfg.world.slots_per_location = vec![2, 4, 4, 6],
        "closer" => s.distance_factor = DistanceFactor::new(0.7)?,
        "saccade-1" => s.saccade.amplitude_deg = 1.0,
        "saccade-2" => s.saccade.amplitude_deg = 2.0,
        "aperture-1" => s.aperture.aperture_number = 1.0,
        "aperture-2" => s.aperture.aperture_number = 2.0,
        "aperture-3" => s.aperture.aperture_number = 3.0,
        "aperture-5" => s.aperture.aperture_number = 5.0,
        "foveation-s1" | "foveation-s2" | "foveation-s3" => {
            s.foveation.enabled = true;
            s.saccade.amplitude_deg = f32::from(name.as_bytes()[name.len() - 1] - b'0');
        }
        "all" => {
            s.foveation.enabled = true;
            s.aperture.aperture_number = 4.0;
            s.distance_factor = DistanceFactor::new(0.7)?;
            s.saccade.amplitude_deg = 1.0;
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; valid presets: {}",
                preset_names().join(", ")
            )))
        }
    }
    Ok(cfg)
}
