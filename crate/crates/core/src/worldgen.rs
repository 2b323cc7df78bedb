// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Procedural houses and toy catalogs.
//!
//! A house is a row of play locations. Each location is a closed polygonal
//! room with the agent standing at its center and 2 to 6 object slots laid
//! out on a circle around it, each slot facing its own wall so that every
//! slot carries a distinct background. Toys are assemblies of scaled
//! primitives whose part counts and proportions are class specific.

use std::collections::HashSet;
use std::f32::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{shapes, Triangle, Vec3};
use crate::rng::{self, Rng};

/// Scene file format version written into every serialized scene.
pub const SCENE_FORMAT_VERSION: u32 = 1;
/// Horizontal agent-to-object distance at distance factor 1.0.
pub const SLOT_RADIUS: f32 = 2.0;
/// Distance from the agent to the mid-plane of every wall.
pub const ROOM_APOTHEM: f32 = 4.0;
pub const ROOM_HEIGHT: f32 = 2.6;
/// Largest dimension of every toy after normalization.
pub const TOY_SIZE: f32 = 0.45;
/// Minimum L2 distance between two toy shape descriptors.
pub const DISTINCTNESS_THRESHOLD: f32 = 0.15;
const LOCATION_SPACING: f32 = 30.0;
const MAX_PARTS: usize = 10;
const MIN_PARTS: usize = 4;

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundTier {
    White,
    EmptyRoom,
    Parquet,
    FullRoom,
}

impl BackgroundTier {
    pub const ALL: [BackgroundTier; 4] = [
        BackgroundTier::White,
        BackgroundTier::EmptyRoom,
        BackgroundTier::Parquet,
        BackgroundTier::FullRoom,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Uniform,
    Checker,
    Stripes,
    Noise,
}

/// Procedural solid texture evaluated at world-space points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub id: u64,
    pub pattern: Pattern,
    pub color_a: [f32; 3],
    pub color_b: [f32; 3],
    /// Cell size in meters.
    pub scale: f32,
    /// Pattern orientation about the vertical axis, radians.
    pub angle: f32,
}

impl Texture {
    pub fn uniform(id: u64, color: [f32; 3]) -> Self {
        Texture {
            id,
            pattern: Pattern::Uniform,
            color_a: color,
            color_b: color,
            scale: 1.0,
            angle: 0.0,
        }
    }

    pub fn albedo(&self, p: Vec3) -> Vec3 {
        let a = Vec3::from(self.color_a);
        if self.pattern == Pattern::Uniform {
            return a;
        }
        let b = Vec3::from(self.color_b);
        let (s, c) = self.angle.sin_cos();
        let u = (p.x * c + p.z * s) / self.scale;
        let v = p.y / self.scale;
        let w = (-p.x * s + p.z * c) / self.scale;
        let t = match self.pattern {
            Pattern::Uniform => 0.0,
            Pattern::Checker => {
                let parity = u.floor() as i64 + v.floor() as i64 + w.floor() as i64;
                (parity.rem_euclid(2)) as f32
            }
            Pattern::Stripes => ((u.floor() as i64).rem_euclid(2)) as f32,
            Pattern::Noise => value_noise(self.id, u, v, w),
        };
        a + (b - a) * t
    }
}

impl From<[f32; 3]> for Vec3 {
    fn from(v: [f32; 3]) -> Vec3 {
        Vec3::new(v[0], v[1], v[2])
    }
}

fn lattice(seed: u64, x: i64, y: i64, z: i64) -> f32 {
    // splitmix64 finalizer over the packed lattice coordinate
    let mut h = seed
        ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn value_noise(seed: u64, u: f32, v: f32, w: f32) -> f32 {
    let (x0, y0, z0) = (u.floor(), v.floor(), w.floor());
    let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
    let (fx, fy, fz) = (smooth(u - x0), smooth(v - y0), smooth(w - z0));
    let (x0, y0, z0) = (x0 as i64, y0 as i64, z0 as i64);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let weight = (if dx == 1 { fx } else { 1.0 - fx })
                    * (if dy == 1 { fy } else { 1.0 - fy })
                    * (if dz == 1 { fz } else { 1.0 - fz });
                acc += weight * lattice(seed, x0 + dx, y0 + dy, z0 + dz);
            }
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimitiveKind {
    Sphere,
    Box,
    Cylinder,
    Cone,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 4] = [
        PrimitiveKind::Sphere,
        PrimitiveKind::Box,
        PrimitiveKind::Cylinder,
        PrimitiveKind::Cone,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn unit_triangles(self) -> Vec<Triangle> {
        match self {
            PrimitiveKind::Sphere => shapes::unit_sphere(),
            PrimitiveKind::Box => shapes::unit_box(),
            PrimitiveKind::Cylinder => shapes::unit_cylinder(),
            PrimitiveKind::Cone => shapes::unit_cone(),
        }
    }
}

/// One primitive of a toy, in the toy's local frame (base on `y = 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyPart {
    pub kind: PrimitiveKind,
    pub center: Vec3,
    pub half_extents: Vec3,
    pub texture: Texture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyObject {
    pub class_id: u32,
    pub textured: bool,
    pub parts: Vec<ToyPart>,
    /// Current orientation about the vertical axis, degrees.
    pub azimuth_deg: f32,
}

impl ToyObject {
    /// Center of the local bounding box.
    pub fn local_centroid(&self) -> Vec3 {
        let (lo, hi) = self.bounds();
        (lo + hi) * 0.5
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f32::INFINITY, f32::INFINITY, f32::INFINITY);
        let mut hi = -lo;
        for p in &self.parts {
            let a = p.center - p.half_extents;
            let b = p.center + p.half_extents;
            lo = Vec3::new(lo.x.min(a.x), lo.y.min(a.y), lo.z.min(a.z));
            hi = Vec3::new(hi.x.max(b.x), hi.y.max(b.y), hi.z.max(b.z));
        }
        (lo, hi)
    }

    /// Radius of the bounding sphere around [`Self::local_centroid`].
    pub fn radius(&self) -> f32 {
        let (lo, hi) = self.bounds();
        (hi - lo).length() * 0.5
    }

    pub fn primitive_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for p in &self.parts {
            counts[p.kind.index()] += 1;
        }
        counts
    }

    /// Shape descriptor: primitive counts over the part limit, bounding
    /// box extents over the toy size, then mean part half-extents over the
    /// toy size.
    pub fn shape_descriptor(&self) -> [f32; 10] {
        let mut d = [0.0; 10];
        for (slot, c) in d.iter_mut().zip(self.primitive_counts()) {
            *slot = c as f32 / MAX_PARTS as f32;
        }
        let (lo, hi) = self.bounds();
        let ext = hi - lo;
        for i in 0..3 {
            d[4 + i] = ext[i] / TOY_SIZE;
        }
        let n = self.parts.len().max(1) as f32;
        for i in 0..3 {
            d[7 + i] = self.parts.iter().map(|p| p.half_extents[i]).sum::<f32>() / n / TOY_SIZE;
        }
        d
    }

    /// World-space triangles with per-triangle texture, placed with its
    /// base center at `base`.
    pub fn world_triangles(&self, base: Vec3) -> Vec<(Triangle, &Texture)> {
        let yaw = self.azimuth_deg.to_radians();
        let pivot = self.local_centroid().horizontal();
        let mut out = Vec::new();
        for part in &self.parts {
            for tri in part.kind.unit_triangles() {
                let t = tri.map(|v| {
                    let local = part.center + v.mul_elem(part.half_extents) - pivot;
                    base + local.rotate_y(yaw)
                });
                out.push((t, &part.texture));
            }
        }
        out
    }
}

pub fn descriptor_distance(a: &ToyObject, b: &ToyObject) -> f32 {
    a.shape_descriptor()
        .iter()
        .zip(b.shape_descriptor())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f32>()
        .sqrt()
}

fn random_color(rng: &mut Rng, lo: f32, hi: f32) -> [f32; 3] {
    [
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    ]
}

fn random_texture(rng: &mut Rng, scale_range: (f32, f32)) -> Texture {
    let pattern = [Pattern::Checker, Pattern::Stripes, Pattern::Noise][rng.random_range(0..3)];
    let color_a = random_color(rng, 0.1, 0.95);
    // keep the two colors visibly apart
    let mut color_b = random_color(rng, 0.1, 0.95);
    while (Vec3::from(color_a) - Vec3::from(color_b)).length() < 0.35 {
        color_b = random_color(rng, 0.1, 0.95);
    }
    Texture {
        id: rng.next_u64(),
        pattern,
        color_a,
        color_b,
        scale: rng.random_range(scale_range.0..scale_range.1),
        angle: rng.random_range(0.0..PI),
    }
}

fn random_toy(class_id: u32, textured: bool, rng: &mut Rng) -> ToyObject {
    let n_parts = rng.random_range(MIN_PARTS..=MAX_PARTS);
    // class-specific preference over primitive kinds
    let mut weights = [0.0f32; 4];
    for w in &mut weights {
        *w = rng.random_range(0.05..1.0);
    }
    let total: f32 = weights.iter().sum();
    let pick_kind = |rng: &mut Rng| {
        let mut r = rng.random_range(0.0..total);
        for (k, w) in PrimitiveKind::ALL.iter().zip(weights) {
            if r < w {
                return *k;
            }
            r -= w;
        }
        PrimitiveKind::Cone
    };
    let uniform_albedo = random_color(rng, 0.15, 0.95);
    let texture_for = |rng: &mut Rng| {
        if textured {
            random_texture(rng, (0.03, 0.09))
        } else {
            Texture::uniform(u64::from(class_id), uniform_albedo)
        }
    };

    let body = Vec3::new(
        rng.random_range(0.3..1.0),
        rng.random_range(0.3..1.0),
        rng.random_range(0.3..1.0),
    );
    let mut parts = vec![ToyPart {
        kind: pick_kind(rng),
        center: Vec3::ZERO,
        half_extents: body,
        texture: texture_for(rng),
    }];
    let rel = rng.random_range(0.2..0.6);
    for _ in 1..n_parts {
        let theta = rng.random_range(0.0..2.0 * PI);
        let phi = rng.random_range(-0.5 * PI..0.5 * PI);
        let dir = Vec3::new(phi.cos() * theta.cos(), phi.sin(), phi.cos() * theta.sin());
        let size = Vec3::new(
            rel * rng.random_range(0.5..1.5),
            rel * rng.random_range(0.5..1.5),
            rel * rng.random_range(0.5..1.5),
        );
        parts.push(ToyPart {
            kind: pick_kind(rng),
            center: dir.mul_elem(body),
            half_extents: size,
            texture: texture_for(rng),
        });
    }

    let mut toy = ToyObject {
        class_id,
        textured,
        parts,
        azimuth_deg: 0.0,
    };
    // normalize: largest extent TOY_SIZE, base on the floor, centered in x/z
    let (lo, hi) = toy.bounds();
    let ext = hi - lo;
    let s = TOY_SIZE / ext.x.max(ext.y).max(ext.z);
    let shift = Vec3::new(-(lo.x + hi.x) * 0.5, -lo.y, -(lo.z + hi.z) * 0.5);
    for p in &mut toy.parts {
        p.center = (p.center + shift) * s;
        p.half_extents = p.half_extents * s;
    }
    toy
}

/// Builds `catalog_size` pairwise-distinct toys, `round(textured_fraction *
/// catalog_size)` of them textured.
pub fn generate_object_catalog(
    catalog_size: usize,
    textured_fraction: f64,
    seed: u64,
) -> Result<Vec<ToyObject>> {
    if catalog_size < 2 {
        return Err(Error::InvalidConfig(format!(
            "catalog_size must be at least 2, got {catalog_size}"
        )));
    }
    if !(0.0..=1.0).contains(&textured_fraction) {
        return Err(Error::InvalidConfig(format!(
            "textured_fraction must lie in [0, 1], got {textured_fraction}"
        )));
    }
    let mut rng = rng::seeded(seed, rng::stream::CATALOG);
    let n_textured = (textured_fraction * catalog_size as f64).round() as usize;
    let mut textured = vec![false; catalog_size];
    textured[..n_textured].fill(true);
    textured.shuffle(&mut rng);

    let mut catalog: Vec<ToyObject> = Vec::with_capacity(catalog_size);
    for (class_id, &is_textured) in textured.iter().enumerate() {
        let toy = loop {
            let candidate = random_toy(class_id as u32, is_textured, &mut rng);
            if catalog
                .iter()
                .all(|o| descriptor_distance(o, &candidate) >= DISTINCTNESS_THRESHOLD)
            {
                break candidate;
            }
        };
        catalog.push(toy);
    }
    Ok(catalog)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSlot {
    /// Floor point the toy rests on at distance factor 1.0.
    pub position: Vec3,
    /// Yaw from the agent toward the slot, degrees.
    pub facing_deg: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayLocation {
    pub id: u32,
    /// Agent floor position.
    pub center: Vec3,
    pub object_slots: Vec<ObjectSlot>,
    pub background_ids: Vec<u32>,
    /// Indices into [`SceneGraph::meshes`] belonging to this room.
    pub mesh_range: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub texture: Texture,
    pub triangles: Vec<Triangle>,
    /// Background this mesh is the wall of, if any.
    pub background_id: Option<u32>,
    pub clutter: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub format_version: u32,
    pub seed: u64,
    pub tier: BackgroundTier,
    /// Color of pixels that hit no geometry.
    pub void_color: [f32; 3],
    pub total_background_count: u32,
    pub locations: Vec<PlayLocation>,
    pub meshes: Vec<Mesh>,
}

impl SceneGraph {
    pub fn location_meshes(&self, location: usize) -> &[Mesh] {
        let (a, b) = self.locations[location].mesh_range;
        &self.meshes[a..b]
    }

    pub fn max_slots(&self) -> usize {
        self.locations
            .iter()
            .map(|l| l.object_slots.len())
            .max()
            .unwrap_or(0)
    }

    /// Every texture id used by walls, floors and clutter.
    pub fn texture_ids(&self) -> HashSet<u64> {
        self.meshes.iter().map(|m| m.texture.id).collect()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene graphs always serialize")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scene: SceneGraph =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("scene file: {e}")))?;
        if scene.format_version != SCENE_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported scene format version {}",
                scene.format_version
            )));
        }
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized scene, hex encoded.
    pub fn checksum(&self) -> String {
        crate::sha256_hex(self.to_toml_string().as_bytes())
    }
}

fn wall_quad(a: Vec3, b: Vec3, height: f32) -> Vec<Triangle> {
    let up = Vec3::new(0.0, height, 0.0);
    vec![[a, b, b + up], [a, b + up, a + up]]
}

fn polygon_fan(center: Vec3, corners: &[Vec3]) -> Vec<Triangle> {
    (0..corners.len())
        .map(|i| [center, corners[i], corners[(i + 1) % corners.len()]])
        .collect()
}

fn transformed(kind: PrimitiveKind, center: Vec3, half: Vec3) -> Vec<Triangle> {
    kind.unit_triangles()
        .into_iter()
        .map(|t| t.map(|v| center + v.mul_elem(half)))
        .collect()
}

/// Builds a house of `n_locations` rooms sharing one background tier.
pub fn build_house(
    n_locations: usize,
    tier: BackgroundTier,
    slots_per_location: &[usize],
    seed: u64,
) -> Result<SceneGraph> {
    if n_locations == 0 {
        return Err(Error::InvalidConfig("a house needs at least one location".into()));
    }
    if slots_per_location.len() != n_locations {
        return Err(Error::InvalidConfig(format!(
            "slots_per_location has {} entries for {} locations",
            slots_per_location.len(),
            n_locations
        )));
    }
    if let Some(bad) = slots_per_location.iter().find(|s| !(2..=6).contains(*s)) {
        return Err(Error::InvalidConfig(format!(
            "slot count {bad} outside [2, 6]"
        )));
    }

    let mut rng = rng::seeded(seed, rng::stream::HOUSE);
    let mut meshes = Vec::new();
    let mut locations = Vec::with_capacity(n_locations);
    let mut next_background = 0u32;

    // shared per-house surfaces for the plain tiers
    let plain_wall = random_color(&mut rng, 0.7, 0.9);
    let plain_floor = random_color(&mut rng, 0.35, 0.6);
    let ceiling_color = [0.92, 0.92, 0.9];

    for (loc_id, &n_slots) in slots_per_location.iter().enumerate() {
        let center = Vec3::new(loc_id as f32 * LOCATION_SPACING, 0.0, 0.0);
        let n_walls = if n_slots >= 4 { n_slots } else { 2 * n_slots };
        let walls_per_slot = n_walls / n_slots;
        let rotation = rng.random_range(0.0..2.0 * PI);
        let half_step = PI / n_walls as f32;
        let corner_radius = ROOM_APOTHEM / half_step.cos();
        let wall_angle = |j: usize| rotation + 2.0 * PI * j as f32 / n_walls as f32;
        let corners: Vec<Vec3> = (0..n_walls)
            .map(|j| {
                let a = wall_angle(j) - half_step;
                center + Vec3::new(a.cos(), 0.0, a.sin()) * corner_radius
            })
            .collect();

        let mut slots = Vec::with_capacity(n_slots);
        let mut background_ids = Vec::with_capacity(n_slots);
        for k in 0..n_slots {
            let a = wall_angle(k * walls_per_slot);
            slots.push(ObjectSlot {
                position: center + Vec3::new(a.cos(), 0.0, a.sin()) * SLOT_RADIUS,
                facing_deg: a.to_degrees().rem_euclid(360.0),
            });
            background_ids.push(next_background);
            next_background += 1;
        }

        let first_mesh = meshes.len();
        if tier != BackgroundTier::White {
            let parquet = random_texture(&mut rng, (0.08, 0.2));
            let floor_texture = if tier >= BackgroundTier::Parquet {
                Texture {
                    pattern: Pattern::Stripes,
                    color_a: random_color(&mut rng, 0.35, 0.55),
                    color_b: random_color(&mut rng, 0.55, 0.75),
                    ..parquet
                }
            } else {
                Texture::uniform(rng.next_u64(), plain_floor)
            };
            meshes.push(Mesh {
                texture: floor_texture,
                triangles: polygon_fan(center, &corners),
                background_id: None,
                clutter: false,
            });
            let lift = Vec3::new(0.0, ROOM_HEIGHT, 0.0);
            let ceiling: Vec<Vec3> = corners.iter().rev().map(|&c| c + lift).collect();
            meshes.push(Mesh {
                texture: Texture::uniform(rng.next_u64(), ceiling_color),
                triangles: polygon_fan(center + lift, &ceiling),
                background_id: None,
                clutter: false,
            });
            for j in 0..n_walls {
                let texture = if tier == BackgroundTier::FullRoom {
                    random_texture(&mut rng, (0.15, 0.5))
                } else {
                    Texture::uniform(rng.next_u64(), plain_wall)
                };
                let background_id = (j % walls_per_slot == 0)
                    .then(|| background_ids[j / walls_per_slot]);
                meshes.push(Mesh {
                    texture,
                    triangles: wall_quad(corners[j], corners[(j + 1) % n_walls], ROOM_HEIGHT),
                    background_id,
                    clutter: false,
                });
            }
            if tier == BackgroundTier::FullRoom {
                let n_clutter = rng.random_range(3..=6);
                for _ in 0..n_clutter {
                    let kind = if rng.random_bool(0.5) {
                        PrimitiveKind::Box
                    } else {
                        PrimitiveKind::Cylinder
                    };
                    let half = Vec3::new(
                        rng.random_range(0.15..0.45),
                        rng.random_range(0.2..0.6),
                        rng.random_range(0.15..0.45),
                    );
                    let a = rng.random_range(0.0..2.0 * PI);
                    let r = rng.random_range(2.9..3.3);
                    let pos = center + Vec3::new(a.cos() * r, half.y, a.sin() * r);
                    meshes.push(Mesh {
                        texture: random_texture(&mut rng, (0.05, 0.2)),
                        triangles: transformed(kind, pos, half),
                        background_id: None,
                        clutter: true,
                    });
                }
            }
        }
        locations.push(PlayLocation {
            id: loc_id as u32,
            center,
            object_slots: slots,
            background_ids,
            mesh_range: (first_mesh, meshes.len()),
        });
    }

    Ok(SceneGraph {
        format_version: SCENE_FORMAT_VERSION,
        seed,
        tier,
        void_color: [1.0, 1.0, 1.0],
        total_background_count: next_background,
        locations,
        meshes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub object: ToyObject,
    pub slot: usize,
}

/// The outcome of setting up one play session.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaySetup {
    pub location: usize,
    pub placements: Vec<Placement>,
    /// Index into `placements` of the first fixated slot.
    pub initial_slot: usize,
}

impl PlaySetup {
    pub fn placement_for_slot(&self, slot: usize) -> Option<&Placement> {
        self.placements.iter().find(|p| p.slot == slot)
    }
}

/// Picks a location uniformly, fills every slot with a distinct random toy
/// at a random initial azimuth, and picks the first fixated slot.
pub fn sample_play_location(
    scene: &SceneGraph,
    catalog: &[ToyObject],
    rng: &mut Rng,
) -> Result<PlaySetup> {
    if scene.locations.is_empty() {
        return Err(Error::InvalidState("scene has no play locations".into()));
    }
    if catalog.len() < scene.max_slots() {
        return Err(Error::InvalidConfig(format!(
            "catalog of {} toys cannot fill a location with {} slots",
            catalog.len(),
            scene.max_slots()
        )));
    }
    let location = rng.random_range(0..scene.locations.len());
    let n_slots = scene.locations[location].object_slots.len();
    let chosen = rand::seq::index::sample(rng, catalog.len(), n_slots);
    let placements = chosen
        .iter()
        .enumerate()
        .map(|(slot, idx)| {
            let mut object = catalog[idx].clone();
            object.azimuth_deg = rng.random_range(0.0..360.0);
            Placement { object, slot }
        })
        .collect();
    let initial_slot = rng.random_range(0..n_slots);
    Ok(PlaySetup {
        location,
        placements,
        initial_slot,
    })
}
