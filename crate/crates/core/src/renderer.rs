// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic z-buffer rasterizer.
//!
//! Flat shading with one directional light plus ambient, solid procedural
//! textures sampled at perspective-correct world positions, near-plane
//! clipping, and an eye-space depth channel. Frames are rendered
//! sequentially so identical inputs give bit-identical buffers.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Triangle, Vec3};
use crate::worldgen::{ObjectSlot, Placement, SceneGraph, Texture};

const AMBIENT: f32 = 0.45;
const DIFFUSE: f32 = 0.55;

fn light_dir() -> Vec3 {
    Vec3::new(0.4, 1.0, 0.3).normalized()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    /// Square output resolution in pixels.
    pub image_size: usize,
    pub vertical_fov_deg: f32,
    pub eye_height: f32,
    pub near_plane: f32,
    pub far_plane: f32,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            image_size: 128,
            vertical_fov_deg: 60.0,
            eye_height: 0.6,
            near_plane: 0.05,
            far_plane: 50.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 {
            return Err(Error::InvalidConfig(format!(
                "image_size must be at least 16, got {}",
                self.image_size
            )));
        }
        if !(1.0..179.0).contains(&self.vertical_fov_deg) {
            return Err(Error::InvalidConfig("vertical_fov_deg must lie in [1, 179)".into()));
        }
        if !(self.near_plane > 0.0 && self.far_plane > self.near_plane) {
            return Err(Error::InvalidConfig("need 0 < near_plane < far_plane".into()));
        }
        Ok(())
    }
}

/// Multiplier on the agent-to-object distance; 1.0 is the far baseline.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f32", into = "f32")]
pub struct DistanceFactor(f32);

impl DistanceFactor {
    pub const BASELINE: DistanceFactor = DistanceFactor(1.0);

    pub fn new(factor: f32) -> Result<Self> {
        if factor > 0.0 && factor <= 1.5 {
            Ok(DistanceFactor(factor))
        } else {
            Err(Error::InvalidConfig(format!(
                "distance factor must lie in (0, 1.5], got {factor}"
            )))
        }
    }

    pub fn get(self) -> f32 {
        self.0
    }
}

impl TryFrom<f32> for DistanceFactor {
    type Error = Error;
    fn try_from(v: f32) -> Result<Self> {
        DistanceFactor::new(v)
    }
}

impl From<DistanceFactor> for f32 {
    fn from(f: DistanceFactor) -> f32 {
        f.0
    }
}

impl Default for DistanceFactor {
    fn default() -> Self {
        DistanceFactor::BASELINE
    }
}

/// Angular gaze offset in degrees, added after aiming.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GazeOffset {
    pub yaw_deg: f32,
    pub pitch_deg: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub yaw_deg: f32,
    pub pitch_deg: f32,
    pub vertical_fov_deg: f32,
    pub width: usize,
    pub height: usize,
}

/// Camera-space basis and projection for one pose.
#[derive(Clone, Copy, Debug)]
pub struct Projector {
    eye: Vec3,
    right: Vec3,
    up: Vec3,
    forward: Vec3,
    tan_half_h: f32,
    tan_half_v: f32,
    width: f32,
    height: f32,
}

impl Projector {
    pub fn new(pose: &CameraPose) -> Self {
        let (yaw, pitch) = (pose.yaw_deg.to_radians(), pose.pitch_deg.to_radians());
        let forward = Vec3::new(pitch.cos() * yaw.cos(), pitch.sin(), pitch.cos() * yaw.sin());
        let right = Vec3::new(-yaw.sin(), 0.0, yaw.cos());
        let up = right.cross(forward);
        let tan_half_v = (pose.vertical_fov_deg.to_radians() * 0.5).tan();
        Projector {
            eye: pose.position,
            right,
            up,
            forward,
            tan_half_v,
            tan_half_h: tan_half_v * pose.width as f32 / pose.height as f32,
            width: pose.width as f32,
            height: pose.height as f32,
        }
    }

    /// Camera-space coordinates `(x right, y up, z forward)`.
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = p - self.eye;
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }

    fn camera_to_screen(&self, c: Vec3) -> (f32, f32) {
        (
            self.width * 0.5 * (1.0 + c.x / (c.z * self.tan_half_h)),
            self.height * 0.5 * (1.0 - c.y / (c.z * self.tan_half_v)),
        )
    }

    /// Continuous pixel coordinates of a world point in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<(f32, f32)> {
        let c = self.to_camera(p);
        (c.z > 0.0).then(|| self.camera_to_screen(c))
    }

    /// Unit camera-space ray through continuous pixel position `(x, y)`.
    pub fn ray(&self, x: f32, y: f32) -> Vec3 {
        let nx = (2.0 * x / self.width - 1.0) * self.tan_half_h;
        let ny = (1.0 - 2.0 * y / self.height) * self.tan_half_v;
        Vec3::new(nx, ny, 1.0).normalized()
    }

    /// World-space ray direction through continuous pixel position.
    pub fn world_ray(&self, x: f32, y: f32) -> Vec3 {
        let c = self.ray(x, y);
        self.right * c.x + self.up * c.y + self.forward * c.z
    }

    pub fn eye(&self) -> Vec3 {
        self.eye
    }
}

/// Floor point of a toy once its slot distance is scaled by `factor`.
pub fn object_base(agent: Vec3, slot: &ObjectSlot, factor: DistanceFactor) -> Vec3 {
    let offset = (slot.position - agent).horizontal() * factor.get();
    Vec3::new(agent.x + offset.x, slot.position.y, agent.z + offset.z)
}

/// Aims the eye at the toy centroid, then applies the gaze offset.
///
/// `agent` is the floor position of the agent and `centroid_height` the
/// height of the toy's centroid above its base.
pub fn pose_camera(
    camera: &CameraConfig,
    agent: Vec3,
    slot: &ObjectSlot,
    centroid_height: f32,
    offset: GazeOffset,
    factor: DistanceFactor,
) -> Result<CameraPose> {
    let eye = agent + Vec3::new(0.0, camera.eye_height, 0.0);
    let target = object_base(agent, slot, factor) + Vec3::new(0.0, centroid_height, 0.0);
    let dir = target - eye;
    let horizontal = dir.horizontal().length();
    if horizontal < 1e-4 {
        return Err(Error::InvalidState(
            "agent coincides with the object; cannot aim".into(),
        ));
    }
    if dir.length() >= camera.far_plane {
        return Err(Error::InvalidState("object beyond the far plane".into()));
    }
    let yaw = dir.z.atan2(dir.x).to_degrees();
    let pitch = dir.y.atan2(horizontal).to_degrees();
    Ok(CameraPose {
        position: eye,
        yaw_deg: yaw + offset.yaw_deg,
        pitch_deg: (pitch + offset.pitch_deg).clamp(-89.0, 89.0),
        vertical_fov_deg: camera.vertical_fov_deg,
        width: camera.image_size,
        height: camera.image_size,
    })
}

/// Rendered RGB + depth with gaze and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RetinalFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major interleaved RGB in `[0, 1]`.
    pub rgb: Vec<f32>,
    /// Row-major eye-space depth in meters, clamped to the far plane.
    pub depth: Option<Vec<f32>>,
    pub gaze_px: (f32, f32),
    pub focus_depth: f32,
    pub vertical_fov_deg: f32,
    pub object_label: u32,
    pub background_label: u32,
    pub location_label: u32,
    /// Pixels covered by the fixated toy.
    pub object_mask: Vec<bool>,
}

impl RetinalFrame {
    /// A constant-color frame with constant depth, gaze at the center.
    pub fn uniform(width: usize, height: usize, color: [f32; 3], depth: f32) -> Self {
        RetinalFrame {
            width,
            height,
            rgb: color.iter().copied().cycle().take(width * height * 3).collect(),
            depth: Some(vec![depth; width * height]),
            gaze_px: (width as f32 * 0.5, height as f32 * 0.5),
            focus_depth: depth,
            vertical_fov_deg: 60.0,
            object_label: 0,
            background_label: 0,
            location_label: 0,
            object_mask: vec![false; width * height],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.rgb.iter().map(|&v| quantize(v)).collect()
    }

    /// Writes the RGB channels as a binary (P6) portable pixmap.
    pub fn write_ppm(&self, out: &mut impl Write) -> Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.to_u8())?;
        Ok(())
    }

    /// Writes the depth channel as raw little-endian `f32`, row-major.
    pub fn write_depth(&self, out: &mut impl Write) -> Result<()> {
        let depth = self
            .depth
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("frame has no depth channel".into()))?;
        for d in depth {
            out.write_all(&d.to_le_bytes())?;
        }
        Ok(())
    }

    /// Dumps `<stem>.ppm` and `<stem>.depth` next to each other.
    pub fn dump(&self, stem: &Path) -> Result<()> {
        let mut ppm = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("ppm"))?);
        self.write_ppm(&mut ppm)?;
        ppm.flush()?;
        if self.depth.is_some() {
            let mut d = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("depth"))?);
            self.write_depth(&mut d)?;
            d.flush()?;
        }
        Ok(())
    }
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Reads a binary P6 pixmap with maxval 255. Returns `(width, height, rgb)`.
pub fn read_ppm(input: impl Read) -> Result<(usize, usize, Vec<u8>)> {
    let mut reader = BufReader::new(input);
    let mut header = Vec::new();
    let bad = |m: &str| Error::InvalidInput(format!("ppm: {m}"));
    while header.len() < 4 {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(bad("truncated header"));
        }
        let line = line.split('#').next().unwrap_or("");
        header.extend(line.split_whitespace().map(str::to_owned));
    }
    if header[0] != "P6" {
        return Err(bad("not a P6 file"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, max) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
    if max != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let mut data = vec![0u8; w * h * 3];
    reader.read_exact(&mut data)?;
    Ok((w, h, data))
}

pub fn read_depth(input: impl Read, len: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; len * 4];
    BufReader::new(input).read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Everything that stays fixed while the gaze moves within one view.
#[derive(Clone, Copy, Debug)]
pub struct Stage<'a> {
    pub scene: &'a SceneGraph,
    pub location: usize,
    pub placements: &'a [Placement],
    pub factor: DistanceFactor,
}

impl Stage<'_> {
    pub fn agent(&self) -> Vec3 {
        self.scene.locations[self.location].center
    }

    /// World-space centroid of the toy in `slot`.
    pub fn object_centroid(&self, placement: &Placement) -> Vec3 {
        let slot = &self.scene.locations[self.location].object_slots[placement.slot];
        object_base(self.agent(), slot, self.factor)
            + Vec3::new(0.0, placement.object.local_centroid().y, 0.0)
    }
}

#[derive(Clone, Copy)]
struct CamVertex {
    cam: Vec3,
    world: Vec3,
}

fn clip_near(tri: [CamVertex; 3], near: f32) -> Vec<CamVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let (ina, inb) = (a.cam.z >= near, b.cam.z >= near);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let t = (near - a.cam.z) / (b.cam.z - a.cam.z);
            out.push(CamVertex {
                cam: a.cam + (b.cam - a.cam) * t,
                world: a.world + (b.world - a.world) * t,
            });
        }
    }
    out
}

struct Raster<'a> {
    proj: Projector,
    width: usize,
    height: usize,
    near: f32,
    far: f32,
    rgb: &'a mut [f32],
    depth: &'a mut [f32],
    owner: &'a mut [i32],
}

impl Raster<'_> {
    fn draw(&mut self, tri: &Triangle, texture: &Texture, owner: i32) {
        let verts = tri.map(|w| CamVertex {
            cam: self.proj.to_camera(w),
            world: w,
        });
        if verts.iter().all(|v| v.cam.z < self.near) {
            return;
        }
        let mut normal = (tri[1] - tri[0]).cross(tri[2] - tri[0]).normalized();
        if normal.dot(self.proj.eye() - tri[0]) < 0.0 {
            normal = -normal;
        }
        let shade = AMBIENT + DIFFUSE * normal.dot(light_dir()).max(0.0);
        let poly = clip_near(verts, self.near);
        for i in 1..poly.len().saturating_sub(1) {
            self.fill([poly[0], poly[i], poly[i + 1]], texture, shade, owner);
        }
    }

    fn fill(&mut self, v: [CamVertex; 3], texture: &Texture, shade: f32, owner: i32) {
        let s = v.map(|c| self.proj.camera_to_screen(c.cam));
        let area = (s[1].0 - s[0].0) * (s[2].1 - s[0].1) - (s[1].1 - s[0].1) * (s[2].0 - s[0].0);
        if area.abs() < 1e-12 || !area.is_finite() {
            return;
        }
        let min_x = s.iter().map(|p| p.0).fold(f32::INFINITY, f32::min).floor().max(0.0) as usize;
        let max_x = s.iter().map(|p| p.0).fold(f32::NEG_INFINITY, f32::max).ceil();
        let min_y = s.iter().map(|p| p.1).fold(f32::INFINITY, f32::min).floor().max(0.0) as usize;
        let max_y = s.iter().map(|p| p.1).fold(f32::NEG_INFINITY, f32::max).ceil();
        if max_x < 0.0 || max_y < 0.0 {
            return;
        }
        let max_x = (max_x as usize).min(self.width);
        let max_y = (max_y as usize).min(self.height);
        let inv_z = v.map(|c| 1.0 / c.cam.z);
        for py in min_y..max_y {
            let y = py as f32 + 0.5;
            for px in min_x..max_x {
                let x = px as f32 + 0.5;
                let edge = |a: (f32, f32), b: (f32, f32)| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
                let w0 = edge(s[1], s[2]) / area;
                let w1 = edge(s[2], s[0]) / area;
                let w2 = edge(s[0], s[1]) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let iz = w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2];
                let z = (1.0 / iz).min(self.far);
                let idx = py * self.width + px;
                if z >= self.depth[idx] {
                    continue;
                }
                let world = (v[0].world * (w0 * inv_z[0])
                    + v[1].world * (w1 * inv_z[1])
                    + v[2].world * (w2 * inv_z[2]))
                    / iz;
                let color = texture.albedo(world) * shade;
                self.depth[idx] = z;
                self.owner[idx] = owner;
                self.rgb[3 * idx] = color.x.clamp(0.0, 1.0);
                self.rgb[3 * idx + 1] = color.y.clamp(0.0, 1.0);
                self.rgb[3 * idx + 2] = color.z.clamp(0.0, 1.0);
            }
        }
    }
}

/// Renders the stage from `pose`, fixating the toy in `fixated_slot`.
pub fn render_view(
    stage: &Stage<'_>,
    fixated_slot: usize,
    pose: &CameraPose,
    camera: &CameraConfig,
) -> Result<RetinalFrame> {
    let location = stage
        .scene
        .locations
        .get(stage.location)
        .ok_or_else(|| Error::InvalidInput(format!("no location {}", stage.location)))?;
    let fixated = stage
        .placements
        .iter()
        .position(|p| p.slot == fixated_slot)
        .ok_or_else(|| Error::InvalidInput(format!("no toy placed in slot {fixated_slot}")))?;

    let (w, h) = (pose.width, pose.height);
    let void = stage.scene.void_color;
    let mut rgb: Vec<f32> = void.iter().copied().cycle().take(w * h * 3).collect();
    let mut depth = vec![camera.far_plane; w * h];
    let mut owner = vec![-1i32; w * h];
    let proj = Projector::new(pose);
    let mut raster = Raster {
        proj,
        width: w,
        height: h,
        near: camera.near_plane,
        far: camera.far_plane,
        rgb: &mut rgb,
        depth: &mut depth,
        owner: &mut owner,
    };
    for mesh in stage.scene.location_meshes(stage.location) {
        for tri in &mesh.triangles {
            raster.draw(tri, &mesh.texture, -2);
        }
    }
    for (i, placement) in stage.placements.iter().enumerate() {
        let slot = &location.object_slots[placement.slot];
        let base = object_base(location.center, slot, stage.factor);
        for (tri, texture) in placement.object.world_triangles(base) {
            raster.draw(&tri, texture, i as i32);
        }
    }

    let centroid = stage.object_centroid(&stage.placements[fixated]);
    Ok(RetinalFrame {
        width: w,
        height: h,
        rgb,
        depth: Some(depth),
        gaze_px: (w as f32 * 0.5, h as f32 * 0.5),
        focus_depth: (centroid - pose.position).length(),
        vertical_fov_deg: pose.vertical_fov_deg,
        object_label: stage.placements[fixated].object.class_id,
        background_label: location.background_ids[fixated_slot],
        location_label: location.id,
        object_mask: owner.iter().map(|&o| o == fixated as i32).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{build_house, generate_object_catalog, BackgroundTier};

    fn slot_ahead(distance: f32, height: f32) -> ObjectSlot {
        ObjectSlot {
            position: Vec3::new(distance, height, 0.0),
            facing_deg: 0.0,
        }
    }

    #[test]
    fn aimed_camera_centers_target() {
        let cam = CameraConfig::default();
        let slot = slot_ahead(2.0, 0.0);
        let pose = pose_camera(&cam, Vec3::ZERO, &slot, 0.2, GazeOffset::default(), DistanceFactor::BASELINE).unwrap();
        let proj = Projector::new(&pose);
        let (x, y) = proj.project(Vec3::new(2.0, 0.2, 0.0)).unwrap();
        assert!((x - 64.0).abs() < 1e-3 && (y - 64.0).abs() < 1e-3, "{x},{y}");
    }

    #[test]
    fn degenerate_aim_is_rejected() {
        let cam = CameraConfig::default();
        let slot = slot_ahead(0.0, 0.0);
        assert!(matches!(
            pose_camera(&cam, Vec3::ZERO, &slot, 0.2, GazeOffset::default(), DistanceFactor::BASELINE),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn distance_factor_bounds() {
        assert!(DistanceFactor::new(0.7).is_ok());
        assert!(DistanceFactor::new(1.5).is_ok());
        assert!(DistanceFactor::new(0.0).is_err());
        assert!(DistanceFactor::new(1.6).is_err());
    }

    #[test]
    fn empty_white_view_is_uniform() {
        let scene = build_house(1, BackgroundTier::White, &[2], 0).unwrap();
        let catalog = generate_object_catalog(2, 0.0, 0).unwrap();
        let placements = vec![Placement { object: catalog[0].clone(), slot: 0 }];
        let stage = Stage { scene: &scene, location: 0, placements: &placements, factor: DistanceFactor::BASELINE };
        let cam = CameraConfig { image_size: 32, ..Default::default() };
        let loc = &scene.locations[0];
        // look straight at the empty slot
        let pose = pose_camera(&cam, loc.center, &loc.object_slots[1], 0.2, GazeOffset::default(), DistanceFactor::BASELINE).unwrap();
        let frame = render_view(&stage, 0, &pose, &cam).unwrap();
        assert!(frame.rgb.iter().all(|&v| v == 1.0));
        assert!(frame.depth.as_ref().unwrap().iter().all(|&d| d == cam.far_plane));
        assert!(frame.object_mask.iter().all(|&m| !m));
    }

    #[test]
    fn ppm_round_trip() {
        let mut frame = RetinalFrame::uniform(17, 16, [0.2, 0.5, 1.0], 3.0);
        frame.rgb[5] = 0.0;
        let mut buf = Vec::new();
        frame.write_ppm(&mut buf).unwrap();
        let (w, h, data) = read_ppm(&buf[..]).unwrap();
        assert_eq!((w, h), (17, 16));
        assert_eq!(data, frame.to_u8());
        let mut d = Vec::new();
        frame.write_depth(&mut d).unwrap();
        assert_eq!(d.len(), 17 * 16 * 4);
        assert_eq!(read_depth(&d[..], 17 * 16).unwrap(), *frame.depth.as_ref().unwrap());
    }
}
