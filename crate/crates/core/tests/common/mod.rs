// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use evlab::renderer::CameraConfig;
use evlab::rng::{seeded, stream};
use evlab::session::{run_play_session, ReplayBuffer, SessionConfig};
use evlab::worldgen::{build_house, generate_object_catalog, BackgroundTier, SceneGraph, ToyObject};

pub struct World {
    pub scene: SceneGraph,
    pub catalog: Vec<ToyObject>,
    pub camera: CameraConfig,
    pub session: SessionConfig,
}

/// One location with `toys` slots and exactly `toys` catalog entries.
pub fn toy_world(tier: BackgroundTier, toys: usize, image_size: usize, seed: u64) -> World {
    World {
        scene: build_house(1, tier, &[toys], seed).unwrap(),
        catalog: generate_object_catalog(toys, 0.5, seed).unwrap(),
        camera: CameraConfig { image_size, ..CameraConfig::default() },
        session: SessionConfig::default(),
    }
}

pub fn fill_buffer(world: &World, episodes: u64, seed: u64) -> ReplayBuffer {
    let mut buf = ReplayBuffer::new(ReplayBuffer::DEFAULT_CAPACITY);
    let mut rng = seeded(seed, stream::SESSION);
    for ep in 0..episodes {
        let s = run_play_session(&world.scene, &world.catalog, &world.session, &world.camera, ep, &mut rng).unwrap();
        buf.push_stream(&s);
    }
    buf
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Direct evaluation of the per-pair loss, no stabilization, averaged over
/// all 2N anchors.
pub fn brute_force_loss(z: &[f64], n: usize, dim: usize, tau: f64) -> f64 {
    let rows = 2 * n;
    let sim = |i: usize, k: usize| {
        let mut s = 0.0;
        for t in 0..dim {
            let d = z[i * dim + t] - z[k * dim + t];
            s += d * d;
        }
        -s.sqrt()
    };
    let mut total = 0.0;
    for i in 0..rows {
        let j = if i < n { i + n } else { i - n };
        let num = (sim(i, j) / tau).exp();
        let mut den = 0.0;
        for k in 0..rows {
            if k != i && k != j {
                den += (sim(i, k) / tau).exp();
            }
        }
        total += -(num / den).ln();
    }
    total / rows as f64
}
