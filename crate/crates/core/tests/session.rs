// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::HashSet;

use common::{fill_buffer, toy_world};
use evlab::renderer::{pose_camera, DistanceFactor, Projector, RetinalFrame, Stage};
use evlab::rng::{seeded, stream};
use evlab::session::{run_play_session, ReplayBuffer, SessionConfig};
use evlab::worldgen::{sample_play_location, BackgroundTier};

#[test]
fn episodes_have_100_steps_in_10_blocks_of_one_toy() {
    let world = toy_world(BackgroundTier::FullRoom, 6, 16, 1);
    let mut rng = seeded(1, stream::SESSION);
    for ep in 0..20 {
        let s = run_play_session(&world.scene, &world.catalog, &world.session, &world.camera, ep, &mut rng).unwrap();
        assert_eq!(s.frames.len(), 100);
        let labels = s.object_labels();
        for (b, block) in labels.chunks(10).enumerate() {
            assert!(block.iter().all(|&l| l == block[0]), "episode {ep} block {b} mixes toys");
        }
        let bgs: Vec<u32> = s.frames.iter().map(|f| f.frame.background_label).collect();
        let slots = &world.scene.locations[0].background_ids;
        let first = slots.iter().position(|&b| b == bgs[0]).unwrap();
        for b in 0..10 {
            let want = slots[(first + b) % slots.len()];
            assert!(bgs[10 * b..10 * b + 10].iter().all(|&x| x == want), "episode {ep} block {b}");
        }
        for pair in labels.chunks(10).collect::<Vec<_>>().windows(2) {
            // 6 distinct toys, so consecutive blocks always switch toy
            assert_ne!(pair[0][0], pair[1][0]);
        }
        assert!(s.frames.iter().enumerate().all(|(i, f)| f.step_index == i));
    }
}

#[test]
fn next_block_fixates_the_toy_on_the_right() {
    let world = toy_world(BackgroundTier::White, 6, 32, 2);
    let loc = &world.scene.locations[0];
    let mut rng = seeded(2, stream::SESSION);
    for _ in 0..10 {
        let setup = sample_play_location(&world.scene, &world.catalog, &mut rng).unwrap();
        let stage = Stage {
            scene: &world.scene,
            location: 0,
            placements: &setup.placements,
            factor: DistanceFactor::BASELINE,
        };
        for slot in 0..6 {
            let next = (slot + 1) % 6;
            let cy = setup.placements[next].object.local_centroid().y;
            let pose =
                pose_camera(&world.camera, loc.center, &loc.object_slots[next], cy, Default::default(), DistanceFactor::BASELINE)
                    .unwrap();
            let prev = stage.object_centroid(&setup.placements[slot]);
            let cam = Projector::new(&pose).to_camera(prev);
            // the toy we just left lies to the left of the new fixation
            assert!(cam.x < 0.0, "slot {slot}: previous toy at camera x = {}", cam.x);
        }
    }
}

#[test]
fn azimuth_steps_stay_in_the_configured_range() {
    let mut world = toy_world(BackgroundTier::White, 6, 16, 3);
    let mut rng = seeded(3, stream::SESSION);
    for ep in 0..10 {
        let s = run_play_session(&world.scene, &world.catalog, &world.session, &world.camera, ep, &mut rng).unwrap();
        for w in s.frames.windows(2).filter(|w| w[0].frame.object_label == w[1].frame.object_label) {
            let delta = (w[1].azimuth_deg - w[0].azimuth_deg).rem_euclid(360.0);
            assert!((0.0..=30.0 + 1e-3).contains(&delta), "delta {delta}");
        }
    }
    world.session.azimuth_max_deg = 0.0;
    let s = run_play_session(&world.scene, &world.catalog, &world.session, &world.camera, 0, &mut rng).unwrap();
    for block in s.frames.chunks(10) {
        assert!(block.iter().all(|f| f.azimuth_deg == block[0].azimuth_deg));
    }
}

#[test]
fn zero_saccade_keeps_gaze_centered() {
    let mut world = toy_world(BackgroundTier::White, 6, 16, 4);
    world.session.saccade.amplitude_deg = 0.0;
    let mut rng = seeded(4, stream::SESSION);
    let s = run_play_session(&world.scene, &world.catalog, &world.session, &world.camera, 0, &mut rng).unwrap();
    assert!(s.frames.iter().all(|f| f.gaze.yaw_deg == 0.0 && f.gaze.pitch_deg == 0.0));
}

#[test]
fn single_background_keeps_one_slot() {
    let mut world = toy_world(BackgroundTier::FullRoom, 6, 16, 5);
    world.session.single_background = true;
    let mut rng = seeded(5, stream::SESSION);
    let s = run_play_session(&world.scene, &world.catalog, &world.session, &world.camera, 0, &mut rng).unwrap();
    let bgs: HashSet<u32> = s.frames.iter().map(|f| f.frame.background_label).collect();
    let toys: HashSet<u32> = s.object_labels().into_iter().collect();
    assert_eq!(bgs.len(), 1);
    assert_eq!(toys.len(), 6);
}

#[test]
fn invalid_session_configs_are_rejected() {
    let world = toy_world(BackgroundTier::White, 6, 16, 6);
    let mut rng = seeded(6, stream::SESSION);
    for cfg in [
        SessionConfig { switch_period: 0, ..Default::default() },
        SessionConfig { episode_length: 95, ..Default::default() },
        SessionConfig { azimuth_min_deg: 20.0, azimuth_max_deg: 10.0, ..Default::default() },
    ] {
        assert!(run_play_session(&world.scene, &world.catalog, &cfg, &world.camera, 0, &mut rng).is_err());
    }
}

#[test]
fn sampled_pairs_are_adjacent_over_10k_batches() {
    let world = toy_world(BackgroundTier::White, 6, 8, 7);
    let buf = fill_buffer(&world, 30, 7);
    let mut rng = seeded(7, stream::BATCH);
    let mut forward = 0usize;
    let mut total = 0usize;
    for _ in 0..10_000 {
        let b = buf.sample_contrastive_batch(32, &mut rng).unwrap();
        let distinct: HashSet<usize> = b.frame_order().into_iter().collect();
        assert_eq!(distinct.len(), 64);
        for i in 0..b.len() {
            let (a, p) = (buf.entry(b.anchors[i]), buf.entry(b.positives[i]));
            assert_eq!(a.episode_id, p.episode_id);
            assert_eq!(a.step_index.abs_diff(p.step_index), 1);
            assert_eq!(p.seq as i64 - a.seq as i64, i64::from(b.offsets[i]));
            forward += usize::from(b.offsets[i] == 1);
            total += 1;
        }
    }
    let share = forward as f64 / total as f64;
    assert!((share - 0.5).abs() < 0.01, "forward share {share}");
}

#[test]
fn fifo_holds_the_newest_80000_frames() {
    let frame = RetinalFrame::uniform(2, 2, [0.3; 3], 2.0);
    let mut buf = ReplayBuffer::new(ReplayBuffer::DEFAULT_CAPACITY);
    for i in 0..80_100u64 {
        buf.push_frame(&frame, i / 100, (i % 100) as usize);
    }
    assert_eq!(buf.len(), 80_000);
    let seqs: Vec<u64> = buf.entries().map(|e| e.seq).collect();
    assert_eq!(seqs.first(), Some(&100));
    assert_eq!(seqs.last(), Some(&80_099));
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
    let mut rng = seeded(8, stream::BATCH);
    for _ in 0..1000 {
        let b = buf.sample_contrastive_batch(32, &mut rng).unwrap();
        assert!(b.anchor_seqs.iter().chain(&b.positive_seqs).all(|&s| s >= 100));
    }
}

#[test]
fn buffer_refuses_to_sample_before_it_is_ready() {
    let frame = RetinalFrame::uniform(2, 2, [0.3; 3], 2.0);
    let mut buf = ReplayBuffer::new(100);
    let mut rng = seeded(9, stream::BATCH);
    assert!(buf.sample_contrastive_batch(4, &mut rng).is_err());
    for i in 0..7 {
        buf.push_frame(&frame, 0, i);
    }
    assert!(buf.sample_contrastive_batch(4, &mut rng).is_err());
    buf.push_frame(&frame, 0, 7);
    assert!(buf.sample_contrastive_batch(4, &mut rng).is_ok());
    assert!(buf.sample_contrastive_batch(0, &mut rng).is_err());
}

#[test]
fn sessions_replay_bit_exactly_and_export() {
    let world = toy_world(BackgroundTier::FullRoom, 6, 24, 10);
    let run = || {
        let mut rng = seeded(10, stream::SESSION);
        run_play_session(&world.scene, &world.catalog, &world.session, &world.camera, 3, &mut rng).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    let dir = tempfile::tempdir().unwrap();
    a.export(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    assert!(csv.lines().nth(1).unwrap().starts_with("3,0,"));
    let (w, h, px) = evlab::renderer::read_ppm(std::fs::File::open(dir.path().join("step_042.ppm")).unwrap()).unwrap();
    assert_eq!((w, h), (24, 24));
    assert_eq!(px, a.frames[42].frame.to_u8());
}
