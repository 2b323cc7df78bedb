// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Negative Euclidean distance.
pub fn similarity<S: Scalar>(u: &[S], v: &[S]) -> Result<S> {
    if u.len() != v.len() {
        return Err(Error::InvalidInput(format!(
            "similarity of {}-d and {}-d vectors",
            u.len(),
            v.len()
        )));
    }
    Ok(-distance(u, v))
}

fn distance<S: Scalar>(u: &[S], v: &[S]) -> S {
    u.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>().sqrt()
}

/// Time-contrastive loss from a row-major `2N x 2N` similarity matrix.
///
/// Row `i < N` is paired with `i + N` and vice versa. Each of the `2N` rows
/// acts once as anchor; its denominator runs over the `2N - 2` rows that
/// are neither the anchor nor its positive. Returns the mean loss and its
/// gradient with respect to every matrix entry.
pub fn loss_from_similarities<S: Scalar>(sims: &[S], n_pairs: usize, tau: S) -> Result<(S, Vec<S>)> {
    if n_pairs < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 pairs, got {n_pairs}")));
    }
    if !(tau > S::zero()) {
        return Err(Error::InvalidInput("temperature must be positive".into()));
    }
    let rows = 2 * n_pairs;
    if sims.len() != rows * rows {
        return Err(Error::InvalidInput(format!(
            "similarity matrix has {} entries, expected {}",
            sims.len(),
            rows * rows
        )));
    }
    let scale = S::one() / (tau * S::from_f64_lossy(rows as f64));
    let mut total = S::zero();
    let mut grad = vec![S::zero(); rows * rows];
    let mut weights = vec![S::zero(); rows];
    for a in 0..rows {
        let p = (a + n_pairs) % rows;
        let row = &sims[a * rows..(a + 1) * rows];
        let negatives = || (0..rows).filter(move |&k| k != a && k != p);
        let max = negatives().map(|k| row[k]).fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for k in negatives() {
            weights[k] = ((row[k] - max) / tau).exp();
            sum += weights[k];
        }
        total += (max - row[p]) / tau + sum.ln();
        let g = &mut grad[a * rows..(a + 1) * rows];
        g[p] -= scale;
        for k in negatives() {
            g[k] += scale * weights[k] / sum;
        }
    }
    Ok((total / S::from_f64_lossy(rows as f64), grad))
}

/// Loss over `2N` latents (anchors then positives, row-major `[2N, dim]`)
/// with negative-Euclidean similarity, and its gradient with respect to
/// the latents. Coincident latents contribute a zero subgradient.
pub fn simclr_tt_loss<S: Scalar>(latents: &[S], dim: usize, tau: S) -> Result<(S, Vec<S>)> {
    if dim == 0 || !latents.len().is_multiple_of(2 * dim) {
        return Err(Error::InvalidInput(format!(
            "{} latent values do not form 2N rows of width {dim}",
            latents.len()
        )));
    }
    let rows = latents.len() / dim;
    let row = |i: usize| &latents[i * dim..(i + 1) * dim];
    let mut dist = vec![S::zero(); rows * rows];
    for i in 0..rows {
        for j in i + 1..rows {
            let d = distance(row(i), row(j));
            dist[i * rows + j] = d;
            dist[j * rows + i] = d;
        }
    }
    let sims: Vec<S> = dist.iter().map(|&d| -d).collect();
    let (loss, d_sims) = loss_from_similarities(&sims, rows / 2, tau)?;
    let mut grad = vec![S::zero(); latents.len()];
    for i in 0..rows {
        for j in i + 1..rows {
            let d = dist[i * rows + j];
            let coef = d_sims[i * rows + j] + d_sims[j * rows + i];
            if coef == S::zero() || d == S::zero() {
                continue;
            }
            // d(-|u_i - u_j|)/du_i = -(u_i - u_j)/d
            let c = coef / d;
            for t in 0..dim {
                let diff = latents[i * dim + t] - latents[j * dim + t];
                grad[i * dim + t] -= c * diff;
                grad[j * dim + t] += c * diff;
            }
        }
    }
    Ok((loss, grad))
}
