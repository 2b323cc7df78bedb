// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Embodied-vision laboratory.
//!
//! Procedurally built houses are viewed by a toddler-like agent that plays
//! with toys; rendered frames go through saccades, depth of field and
//! foveation; an encoder learns from temporally adjacent frames with a
//! time-contrastive loss; linear probes measure how well object and
//! background identity can be read out of the learnt representation.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod geometry;
pub mod learner;
pub mod renderer;
pub mod retina;
pub mod rng;
pub mod scalar;
pub mod session;
pub mod worldgen;

pub use error::{Error, Result};

/// Training runs in single precision.
pub type Real = f32;
pub type Encoder = learner::EncoderParams<Real>;
pub type Optimizer = learner::OptimizerState<Real>;
pub type Images = learner::ImageBatch<Real>;

use sha2::{Digest, Sha256};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
