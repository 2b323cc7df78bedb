// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Minimal 3-vector math for scene construction and rasterization.
//!
//! Convention: right-handed, `y` up, meters.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

    pub const fn new(x: f32, y: f32, z: f32) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f32 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f32 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let l = self.length();
        if l > 0.0 {
            self / l
        } else {
            self
        }
    }

    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    /// Rotation about the world `y` axis by `angle` radians (positive turns
    /// `+x` toward `+z`, matching increasing camera yaw).
    pub fn rotate_y(self, angle: f32) -> Vec3 {
        let (s, c) = angle.sin_cos();
        Vec3::new(c * self.x - s * self.z, self.y, s * self.x + c * self.z)
    }

    pub fn horizontal(self) -> Vec3 {
        Vec3::new(self.x, 0.0, self.z)
    }

    pub fn to_array(self) -> [f32; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f32> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f32) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f32> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f32) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f32;
    fn index(&self, i: usize) -> &f32 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range: {i}"),
        }
    }
}

pub type Triangle = [Vec3; 3];

/// Triangle soup builders for the primitive shapes used by toys and
/// furniture. All shapes are centered at the origin with unit half-extents
/// along each axis; callers scale and translate.
pub mod shapes {
    use super::{Triangle, Vec3};
    use std::f32::consts::PI;

    const SEGMENTS: usize = 12;
    const RINGS: usize = 6;

    pub fn unit_box() -> Vec<Triangle> {
        let c = |x: f32, y: f32, z: f32| Vec3::new(x, y, z);
        let v = [
            c(-1.0, -1.0, -1.0),
            c(1.0, -1.0, -1.0),
            c(1.0, 1.0, -1.0),
            c(-1.0, 1.0, -1.0),
            c(-1.0, -1.0, 1.0),
            c(1.0, -1.0, 1.0),
            c(1.0, 1.0, 1.0),
            c(-1.0, 1.0, 1.0),
        ];
        let quads = [
            [0, 3, 2, 1],
            [4, 5, 6, 7],
            [0, 1, 5, 4],
            [3, 7, 6, 2],
            [0, 4, 7, 3],
            [1, 2, 6, 5],
        ];
        quads
            .iter()
            .flat_map(|q| [[v[q[0]], v[q[1]], v[q[2]]], [v[q[0]], v[q[2]], v[q[3]]]])
            .collect()
    }

    pub fn unit_sphere() -> Vec<Triangle> {
        let point = |ring: usize, seg: usize| {
            let theta = PI * ring as f32 / RINGS as f32;
            let phi = 2.0 * PI * seg as f32 / SEGMENTS as f32;
            Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin())
        };
        let mut tris = Vec::with_capacity(2 * RINGS * SEGMENTS);
        for r in 0..RINGS {
            for s in 0..SEGMENTS {
                let a = point(r, s);
                let b = point(r, s + 1);
                let c = point(r + 1, s + 1);
                let d = point(r + 1, s);
                if r != 0 {
                    tris.push([a, b, d]);
                }
                if r != RINGS - 1 {
                    tris.push([b, c, d]);
                }
            }
        }
        tris
    }

    fn ring(y: f32, radius: f32, seg: usize) -> Vec3 {
        let phi = 2.0 * PI * seg as f32 / SEGMENTS as f32;
        Vec3::new(radius * phi.cos(), y, radius * phi.sin())
    }

    pub fn unit_cylinder() -> Vec<Triangle> {
        let top = Vec3::new(0.0, 1.0, 0.0);
        let bottom = Vec3::new(0.0, -1.0, 0.0);
        let mut tris = Vec::with_capacity(4 * SEGMENTS);
        for s in 0..SEGMENTS {
            let (a, b) = (ring(-1.0, 1.0, s), ring(-1.0, 1.0, s + 1));
            let (c, d) = (ring(1.0, 1.0, s + 1), ring(1.0, 1.0, s));
            tris.push([a, b, c]);
            tris.push([a, c, d]);
            tris.push([top, d, c]);
            tris.push([bottom, b, a]);
        }
        tris
    }

    pub fn unit_cone() -> Vec<Triangle> {
        let apex = Vec3::new(0.0, 1.0, 0.0);
        let bottom = Vec3::new(0.0, -1.0, 0.0);
        let mut tris = Vec::with_capacity(2 * SEGMENTS);
        for s in 0..SEGMENTS {
            let (a, b) = (ring(-1.0, 1.0, s), ring(-1.0, 1.0, s + 1));
            tris.push([a, b, apex]);
            tris.push([bottom, b, a]);
        }
        tris
    }
}
