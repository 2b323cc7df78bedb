// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Seeded random streams. Every stochastic component draws from its own
//! ChaCha stream so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named stream identifiers.
pub mod stream {
    pub const CATALOG: u64 = 1;
    pub const HOUSE: u64 = 2;
    pub const SESSION: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const DROPOUT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const PROBE_DATA: u64 = 7;
    pub const PROBE_SPLIT: u64 = 8;
    pub const SALIENCY: u64 = 9;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
