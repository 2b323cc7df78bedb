// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Binary checkpoint layout, all integers and floats little-endian:
//!
//! ```text
//! magic "EVLABCKP" | u32 version | [u8; 32] config hash
//! u32 latent_dim | f64 dropout | u32 tensor count
//! per tensor: u32 name length, name, u32 rank, u32 dims..., f32 values
//! u64 optimizer step | f64 beta1 | f64 beta2 | f64 epsilon
//! first-moment values, then second-moment values (f32, registry order)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{EncoderParams, LearnConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"EVLABCKP";
const VERSION: u32 = 1;

/// SHA-256 of the learner configuration's canonical TOML form.
pub fn config_hash(cfg: &LearnConfig) -> [u8; 32] {
    let text = toml::to_string(cfg).expect("learner config serializes");
    Sha256::digest(text.as_bytes()).into()
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{v} does not fit a u32 field")))?;
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_values<S: Scalar>(w: &mut impl Write, values: &[S]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    Ok(w.write_all(&bytes)?)
}

pub fn write_checkpoint<S: Scalar>(
    w: &mut impl Write,
    params: &EncoderParams<S>,
    state: &OptimizerState<S>,
    cfg: &LearnConfig,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&config_hash(cfg))?;
    put_u32(w, params.latent_dim)?;
    w.write_all(&params.dropout.to_le_bytes())?;
    put_u32(w, params.tensors().len())?;
    for t in params.tensors() {
        put_u32(w, t.name.len())?;
        w.write_all(t.name.as_bytes())?;
        put_u32(w, t.shape.len())?;
        for &d in &t.shape {
            put_u32(w, d)?;
        }
        put_values(w, &t.data)?;
    }
    w.write_all(&state.step.to_le_bytes())?;
    for c in [state.beta1, state.beta2, state.epsilon] {
        w.write_all(&c.to_le_bytes())?;
    }
    for moment in [&state.first_moment, &state.second_moment] {
        for t in moment.tensors() {
            put_values(w, &t.data)?;
        }
    }
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::InvalidInput(format!("checkpoint: {}", msg.into()))
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| corrupt(format!("truncated ({e})")))?;
    Ok(buf)
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    Ok(u32::from_le_bytes(take(r)?) as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(take(r)?))
}

fn get_values<S: Scalar>(r: &mut impl Read, out: &mut [S]) -> Result<()> {
    let mut bytes = vec![0u8; out.len() * 4];
    r.read_exact(&mut bytes).map_err(|e| corrupt(format!("truncated ({e})")))?;
    for (v, chunk) in out.iter_mut().zip(bytes.chunks_exact(4)) {
        *v = S::from_f64_lossy(f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes"))));
    }
    Ok(())
}

/// Reads a checkpoint, rejecting it unless it was written under `cfg`.
pub fn read_checkpoint<S: Scalar>(
    r: &mut impl Read,
    cfg: &LearnConfig,
) -> Result<(EncoderParams<S>, OptimizerState<S>)> {
    if &take::<8>(r)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(take(r)?);
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    if take::<32>(r)? != config_hash(cfg) {
        return Err(Error::InvalidConfig(
            "checkpoint was written under a different learner configuration".into(),
        ));
    }
    let latent_dim = get_u32(r)?;
    let dropout = get_f64(r)?;
    let mut params = EncoderParams::<S>::zeros(latent_dim, dropout);
    if get_u32(r)? != params.tensors().len() {
        return Err(corrupt("tensor count mismatch"));
    }
    for t in params.tensors_mut() {
        let name_len = get_u32(r)?;
        if name_len > 256 {
            return Err(corrupt("oversized tensor name"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|e| corrupt(format!("truncated ({e})")))?;
        let rank = get_u32(r)?;
        if rank > 8 {
            return Err(corrupt("oversized tensor rank"));
        }
        let shape = (0..rank).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
        if name != t.name.as_bytes() || shape != t.shape {
            return Err(corrupt(format!("tensor {} does not match the encoder layout", t.name)));
        }
        get_values(r, &mut t.data)?;
    }
    let step = u64::from_le_bytes(take(r)?);
    let (beta1, beta2, epsilon) = (get_f64(r)?, get_f64(r)?, get_f64(r)?);
    let mut state = OptimizerState {
        first_moment: params.zeros_like(),
        second_moment: params.zeros_like(),
        step,
        beta1,
        beta2,
        epsilon,
    };
    for moment in [&mut state.first_moment, &mut state.second_moment] {
        for t in moment.tensors_mut() {
            get_values(r, &mut t.data)?;
        }
    }
    Ok((params, state))
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    params: &EncoderParams<S>,
    state: &OptimizerState<S>,
    cfg: &LearnConfig,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, params, state, cfg)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path, cfg: &LearnConfig) -> Result<(EncoderParams<S>, OptimizerState<S>)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut r, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, stream};

    #[test]
    fn round_trip_and_hash_check() {
        let cfg = LearnConfig { latent_dim: 5, ..Default::default() };
        let params = EncoderParams::<f32>::from_config(&cfg, &mut seeded(1, stream::INIT));
        let mut state = OptimizerState::new(&params, &cfg);
        state.step = 7;
        state.first_moment.tensors_mut()[9].data[2] = 0.25;
        let mut bytes = vec![];
        write_checkpoint(&mut bytes, &params, &state, &cfg).unwrap();
        let (p2, s2) = read_checkpoint::<f32>(&mut bytes.as_slice(), &cfg).unwrap();
        assert_eq!(p2, params);
        assert_eq!(s2, state);

        let other = LearnConfig { temperature: 0.1, ..cfg.clone() };
        assert!(read_checkpoint::<f32>(&mut bytes.as_slice(), &other).unwrap_err().is_config());
        assert!(read_checkpoint::<f32>(&mut &bytes[..bytes.len() - 3], &cfg).is_err());
        bytes[0] = b'X';
        assert!(read_checkpoint::<f32>(&mut bytes.as_slice(), &cfg).is_err());
    }
}
