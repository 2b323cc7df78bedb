// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Play sessions and the replay buffer of temporally ordered frames.

use std::collections::{HashSet, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::renderer::{pose_camera, render_view, CameraConfig, DistanceFactor, GazeOffset, RetinalFrame, Stage};
use crate::retina::{
    apply_retinal_pipeline, sample_saccade, uniform_angle, ApertureConfig, FoveationConfig, SaccadeConfig,
};
use crate::rng::Rng;
use crate::worldgen::{sample_play_location, Placement, SceneGraph, ToyObject};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    pub episode_length: usize,
    pub switch_period: usize,
    pub azimuth_min_deg: f32,
    pub azimuth_max_deg: f32,
    pub distance_factor: DistanceFactor,
    /// Present every toy in one slot instead of turning toward each slot.
    pub single_background: bool,
    pub saccade: SaccadeConfig,
    pub aperture: ApertureConfig,
    pub foveation: FoveationConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            episode_length: 100,
            switch_period: 10,
            azimuth_min_deg: 0.0,
            azimuth_max_deg: 30.0,
            distance_factor: DistanceFactor::BASELINE,
            single_background: false,
            saccade: SaccadeConfig::default(),
            aperture: ApertureConfig::default(),
            foveation: FoveationConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.switch_period == 0 || self.episode_length == 0 {
            return Err(Error::InvalidConfig(
                "episode_length and switch_period must be positive".into(),
            ));
        }
        if !self.episode_length.is_multiple_of(self.switch_period) {
            return Err(Error::InvalidConfig(format!(
                "episode_length {} is not divisible by switch_period {}",
                self.episode_length, self.switch_period
            )));
        }
        let range = 0.0..360.0;
        if !(range.contains(&self.azimuth_min_deg)
            && range.contains(&self.azimuth_max_deg)
            && self.azimuth_min_deg <= self.azimuth_max_deg)
        {
            return Err(Error::InvalidConfig(
                "azimuth range must be an ordered sub-range of [0, 360)".into(),
            ));
        }
        self.saccade.validate()?;
        self.aperture.validate()?;
        self.foveation.validate()
    }
}

/// One step of a play session.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamFrame {
    pub step_index: usize,
    pub frame: RetinalFrame,
    /// Azimuth of the fixated toy at this step.
    pub azimuth_deg: f32,
    pub gaze: GazeOffset,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStream {
    pub episode_id: u64,
    pub frames: Vec<StreamFrame>,
}

impl EpisodeStream {
    pub fn object_labels(&self) -> Vec<u32> {
        self.frames.iter().map(|f| f.frame.object_label).collect()
    }

    /// Writes one `step_XXX.ppm` per frame and a `labels.csv`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("labels.csv"))?);
        writeln!(
            csv,
            "episode_id,step,object_label,background_label,location_label,azimuth_deg,gaze_yaw_deg,gaze_pitch_deg,file"
        )?;
        for f in &self.frames {
            let name = format!("step_{:03}.ppm", f.step_index);
            let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?);
            f.frame.write_ppm(&mut out)?;
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                self.episode_id,
                f.step_index,
                f.frame.object_label,
                f.frame.background_label,
                f.frame.location_label,
                f.azimuth_deg,
                f.gaze.yaw_deg,
                f.gaze.pitch_deg,
                name
            )?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Renders one fixation of the toy in `slot` and applies the retinal
/// effects configured in `cfg`.
pub fn observe(
    stage: &Stage<'_>,
    slot: usize,
    gaze: GazeOffset,
    camera: &CameraConfig,
    cfg: &SessionConfig,
) -> Result<RetinalFrame> {
    let location = &stage.scene.locations[stage.location];
    let placement = stage
        .placements
        .iter()
        .find(|p| p.slot == slot)
        .ok_or_else(|| Error::InvalidInput(format!("no toy in slot {slot}")))?;
    let pose = pose_camera(
        camera,
        location.center,
        &location.object_slots[slot],
        placement.object.local_centroid().y,
        gaze,
        stage.factor,
    )?;
    let frame = render_view(stage, slot, &pose, camera)?;
    apply_retinal_pipeline(&frame, &cfg.aperture, &cfg.foveation)
}

struct StepPlan {
    slot: usize,
    placements: Vec<Placement>,
    azimuth: f32,
    gaze: GazeOffset,
}

/// Simulates one play session.
///
/// Every `switch_period` steps the agent turns to the next toy to its
/// right; every step the fixated toy rotates by a uniform azimuth increment
/// and the eyes make a saccade around it.
pub fn run_play_session(
    scene: &SceneGraph,
    catalog: &[ToyObject],
    cfg: &SessionConfig,
    camera: &CameraConfig,
    episode_id: u64,
    rng: &mut Rng,
) -> Result<EpisodeStream> {
    cfg.validate()?;
    let setup = sample_play_location(scene, catalog, rng)?;
    let n_slots = setup.placements.len();
    let mut placements = setup.placements.clone();

    let mut plans = Vec::with_capacity(cfg.episode_length);
    for step in 0..cfg.episode_length {
        let block = step / cfg.switch_period;
        // placements are indexed by slot, slots are ordered by increasing yaw
        let current = (setup.initial_slot + block) % n_slots;
        let obj = &mut placements[current].object;
        obj.azimuth_deg = (obj.azimuth_deg
            + uniform_angle(cfg.azimuth_min_deg, cfg.azimuth_max_deg, rng))
        .rem_euclid(360.0);
        let azimuth = obj.azimuth_deg;
        let gaze = sample_saccade(&cfg.saccade, rng);
        let (slot, visible) = if cfg.single_background {
            let toy = Placement {
                object: placements[current].object.clone(),
                slot: setup.initial_slot,
            };
            (setup.initial_slot, vec![toy])
        } else {
            (current, placements.clone())
        };
        plans.push(StepPlan {
            slot,
            placements: visible,
            azimuth,
            gaze,
        });
    }

    let frames = plans
        .par_iter()
        .enumerate()
        .map(|(step, plan)| {
            let stage = Stage {
                scene,
                location: setup.location,
                placements: &plan.placements,
                factor: cfg.distance_factor,
            };
            let frame = observe(&stage, plan.slot, plan.gaze, camera, cfg)?;
            Ok(StreamFrame {
                step_index: step,
                frame,
                azimuth_deg: plan.azimuth,
                gaze: plan.gaze,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EpisodeStream { episode_id, frames })
}

/// A frame stored in the replay buffer, quantized to 8 bits.
#[derive(Clone, Debug, PartialEq)]
pub struct BufferEntry {
    /// Global insertion index; never reused.
    pub seq: u64,
    pub episode_id: u64,
    pub step_index: usize,
    pub object_label: u32,
    pub background_label: u32,
    pub location_label: u32,
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub pixels: Arc<[u8]>,
}

/// FIFO ring of frames with episode/step identity.
///
/// Single writer: pushes take `&mut self`; sampling takes `&self` and
/// therefore sees a consistent snapshot.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<BufferEntry>,
    next_seq: u64,
}

/// Temporally adjacent anchor/positive pairs drawn from one buffer snapshot.
/// Indices are positions in the buffer at sampling time.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveBatch {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    pub anchor_seqs: Vec<u64>,
    pub positive_seqs: Vec<u64>,
    pub episode_ids: Vec<u64>,
    /// `+1` for a successor, `-1` for a predecessor.
    pub offsets: Vec<i8>,
}

impl ContrastiveBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Anchors followed by positives, the row order the loss expects.
    pub fn frame_order(&self) -> Vec<usize> {
        self.anchors.iter().chain(&self.positives).copied().collect()
    }
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 80_000;

    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
            next_seq: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, pos: usize) -> &BufferEntry {
        &self.entries[pos]
    }

    pub fn entries(&self) -> impl Iterator<Item = &BufferEntry> {
        self.entries.iter()
    }

    pub fn push_frame(&mut self, frame: &RetinalFrame, episode_id: u64, step_index: usize) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(BufferEntry {
            seq: self.next_seq,
            episode_id,
            step_index,
            object_label: frame.object_label,
            background_label: frame.background_label,
            location_label: frame.location_label,
            width: frame.width,
            height: frame.height,
            pixels: frame.to_u8().into(),
        });
        self.next_seq += 1;
    }

    pub fn push_stream(&mut self, stream: &EpisodeStream) {
        for f in &stream.frames {
            self.push_frame(&f.frame, stream.episode_id, f.step_index);
        }
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        let (x, y) = (&self.entries[a], &self.entries[b]);
        x.episode_id == y.episode_id && x.step_index.abs_diff(y.step_index) == 1
    }

    fn neighbors(&self, pos: usize) -> (bool, bool) {
        let pred = pos > 0 && self.adjacent(pos, pos - 1);
        let succ = pos + 1 < self.entries.len() && self.adjacent(pos, pos + 1);
        (pred, succ)
    }

    /// Draws `n` anchors uniformly among entries with an in-episode
    /// neighbor and pairs each with its successor or predecessor (coin
    /// flip, forced at episode boundaries). All `2n` entries are distinct.
    pub fn sample_contrastive_batch(&self, n: usize, rng: &mut Rng) -> Result<ContrastiveBatch> {
        if n == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        let len = self.entries.len();
        if len < 2 * n {
            return Err(Error::NotReady(format!(
                "buffer holds {len} frames, need at least {}",
                2 * n
            )));
        }
        let mut batch = ContrastiveBatch {
            anchors: Vec::with_capacity(n),
            positives: Vec::with_capacity(n),
            anchor_seqs: Vec::with_capacity(n),
            positive_seqs: Vec::with_capacity(n),
            episode_ids: Vec::with_capacity(n),
            offsets: Vec::with_capacity(n),
        };
        let mut used = HashSet::with_capacity(2 * n);
        let budget = 100 * n + 1000;
        for _ in 0..budget {
            if batch.len() == n {
                break;
            }
            let anchor = rng.random_range(0..len);
            let (pred, succ) = self.neighbors(anchor);
            if !(pred || succ) || used.contains(&anchor) {
                continue;
            }
            let forward = match (pred, succ) {
                (true, true) => rng.random_bool(0.5),
                (false, true) => true,
                _ => false,
            };
            let positive = if forward { anchor + 1 } else { anchor - 1 };
            if used.contains(&positive) {
                continue;
            }
            used.insert(anchor);
            used.insert(positive);
            batch.anchors.push(anchor);
            batch.positives.push(positive);
            batch.anchor_seqs.push(self.entries[anchor].seq);
            batch.positive_seqs.push(self.entries[positive].seq);
            batch.episode_ids.push(self.entries[anchor].episode_id);
            batch.offsets.push(if forward { 1 } else { -1 });
        }
        if batch.len() < n {
            return Err(Error::NotReady(format!(
                "could not find {n} disjoint adjacent pairs"
            )));
        }
        Ok(batch)
    }
}
