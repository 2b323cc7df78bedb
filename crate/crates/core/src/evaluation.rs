// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Linear-probe evaluation of frozen representations, and saliency maps.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{backward, encoder_forward, EncoderParams, ImageBatch, Latents, Mode};
use crate::renderer::{CameraConfig, Stage};
use crate::retina::sample_saccade;
use crate::rng::{seeded, stream, Rng};
use crate::scalar::Scalar;
use crate::session::{observe, SessionConfig};
use crate::worldgen::{Placement, SceneGraph, ToyObject};

/// Smallest dataset size used for full-scale runs.
pub const RECOMMENDED_PROBE_SIZE: usize = 1200;
pub const PROBE_L2: f64 = 1e-4;
pub const PROBE_MAX_ITERATIONS: usize = 5000;
pub const PROBE_TOLERANCE: f64 = 1e-6;
/// Consecutive small improvements that end probe fitting.
pub const PROBE_PATIENCE: usize = 10;
/// Fraction of a probe dataset used to fit; the rest measures accuracy.
pub const PROBE_FIT_FRACTION: f64 = 0.8;
pub const SALIENCY_NEGATIVES: usize = 14;
/// Frames encoded per forward pass during feature extraction.
const FEATURE_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// Same house as training.
    Validation,
    /// A house never seen in training.
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeTarget {
    Object,
    Background,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeDataset {
    pub split: Split,
    pub width: usize,
    pub height: usize,
    /// 8-bit interleaved RGB, as stored for training.
    pub frames: Vec<Arc<[u8]>>,
    pub object_labels: Vec<u32>,
    pub background_labels: Vec<u32>,
    /// Per-frame mask of pixels covered by the fixated toy.
    pub object_masks: Vec<Arc<[bool]>>,
}

impl ProbeDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn labels(&self, target: ProbeTarget) -> &[u32] {
        match target {
            ProbeTarget::Object => &self.object_labels,
            ProbeTarget::Background => &self.background_labels,
        }
    }

    pub fn images<S: Scalar>(&self, range: std::ops::Range<usize>) -> Result<ImageBatch<S>> {
        let frames: Vec<&[u8]> = self.frames[range].iter().map(|f| &f[..]).collect();
        ImageBatch::from_u8(self.height, self.width, &frames)
    }

    /// Hash over labels and pixels, for reproducibility checks.
    pub fn checksum(&self) -> String {
        let mut bytes = Vec::new();
        for i in 0..self.len() {
            bytes.extend_from_slice(&self.object_labels[i].to_le_bytes());
            bytes.extend_from_slice(&self.background_labels[i].to_le_bytes());
            bytes.extend_from_slice(&self.frames[i]);
        }
        crate::sha256_hex(&bytes)
    }
}

struct ProbePlan {
    location: usize,
    slot: usize,
    placements: Vec<Placement>,
}

/// Renders `n` fixations balanced over toy classes and over backgrounds,
/// with toy azimuth and saccades drawn as in training and the same retinal
/// effects. Pass the training scene for [`Split::Validation`] and a house
/// built from a different seed for [`Split::Test`].
pub fn build_probe_dataset(
    split: Split,
    scene: &SceneGraph,
    catalog: &[ToyObject],
    session: &SessionConfig,
    camera: &CameraConfig,
    n: usize,
    seed: u64,
) -> Result<ProbeDataset> {
    if n == 0 {
        return Err(Error::InvalidInput("probe dataset size must be positive".into()));
    }
    if scene.locations.is_empty() || catalog.len() < scene.max_slots() {
        return Err(Error::InvalidConfig(format!(
            "catalog of {} toys cannot populate a scene with {} slots per location",
            catalog.len(),
            scene.max_slots()
        )));
    }
    if n < RECOMMENDED_PROBE_SIZE {
        log::warn!("{split:?} probe dataset of {n} frames is below {RECOMMENDED_PROBE_SIZE}");
    }
    let mut rng = seeded(seed, stream::PROBE_DATA);
    let backgrounds: Vec<(usize, usize)> = scene
        .locations
        .iter()
        .enumerate()
        .flat_map(|(l, loc)| (0..loc.object_slots.len()).map(move |s| (l, s)))
        .collect();
    let mut classes: Vec<usize> = (0..n).map(|i| i % catalog.len()).collect();
    let mut places: Vec<usize> = (0..n).map(|i| i % backgrounds.len()).collect();
    classes.shuffle(&mut rng);
    places.shuffle(&mut rng);

    let mut plans = Vec::with_capacity(n);
    for (&class, &place) in classes.iter().zip(&places) {
        let (location, slot) = backgrounds[place];
        let n_slots = scene.locations[location].object_slots.len();
        let others: Vec<usize> = (0..catalog.len()).filter(|&c| c != class).collect();
        let fill = rand::seq::index::sample(&mut rng, others.len(), n_slots - 1);
        let mut fill = fill.iter().map(|i| others[i]);
        let placements = (0..n_slots)
            .map(|s| {
                let idx = if s == slot { class } else { fill.next().expect("enough toys") };
                let mut object = catalog[idx].clone();
                object.azimuth_deg = rng.random_range(0.0..360.0);
                Placement { object, slot: s }
            })
            .collect();
        plans.push(ProbePlan { location, slot, placements });
    }
    // Saccades are drawn after the layout so frame content does not shift
    // when only the saccade amplitude changes.
    let gazes: Vec<_> = plans.iter().map(|_| sample_saccade(&session.saccade, &mut rng)).collect();

    let frames = plans
        .par_iter()
        .zip(&gazes)
        .map(|(plan, &gaze)| {
            let stage = Stage {
                scene,
                location: plan.location,
                placements: &plan.placements,
                factor: session.distance_factor,
            };
            observe(&stage, plan.slot, gaze, camera, session)
        })
        .collect::<Result<Vec<_>>>()?;
    let size = camera.image_size;
    Ok(ProbeDataset {
        split,
        width: size,
        height: size,
        object_labels: frames.iter().map(|f| f.object_label).collect(),
        background_labels: frames.iter().map(|f| f.background_label).collect(),
        object_masks: frames.iter().map(|f| f.object_mask.clone().into()).collect(),
        frames: frames.iter().map(|f| f.to_u8().into()).collect(),
    })
}

/// Eval-mode latents for every frame of the dataset.
pub fn extract_features<S: Scalar>(params: &EncoderParams<S>, dataset: &ProbeDataset) -> Result<Latents<S>> {
    let chunks: Vec<_> = (0..dataset.len())
        .step_by(FEATURE_CHUNK)
        .map(|start| start..(start + FEATURE_CHUNK).min(dataset.len()))
        .collect();
    let parts = chunks
        .into_par_iter()
        .map(|range| {
            let images = dataset.images(range)?;
            Ok(encoder_forward(params, &images, Mode::Eval, None)?.0.data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Latents {
        batch: dataset.len(),
        dim: params.latent_dim,
        data: parts.concat(),
    })
}

/// Seeded shuffle of `0..n` cut into fit and held-out parts.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed, stream::PROBE_SPLIT));
    let cut = ((n as f64) * PROBE_FIT_FRACTION).round() as usize;
    let held = idx.split_off(cut.min(n));
    (idx, held)
}

/// Multinomial logistic regression on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub target: ProbeTarget,
    pub dim: usize,
    /// Original label of each output class.
    pub classes: Vec<u32>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Row-major `[classes, dim]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Regularized training loss after each accepted iteration.
    pub loss_history: Vec<f64>,
}

impl LinearProbe {
    pub fn predict(&self, feature: &[f64]) -> u32 {
        let mut best = (f64::NEG_INFINITY, 0);
        for c in 0..self.classes.len() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            let z: f64 = self.bias[c]
                + w.iter()
                    .enumerate()
                    .map(|(j, wj)| wj * (feature[j] - self.mean[j]) / self.scale[j])
                    .sum::<f64>();
            if z > best.0 {
                best = (z, c);
            }
        }
        self.classes[best.1]
    }
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [usize],
    rows: usize,
    dim: usize,
    classes: usize,
}

impl Problem<'_> {
    /// Mean cross-entropy plus `PROBE_L2/2 * |W|^2`, and its gradient over
    /// `[W, b]` packed row-major.
    fn eval(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (d, k) = (self.dim, self.classes);
        let (w, b) = theta.split_at(k * d);
        let mut loss = 0.0;
        let mut g_acc = grad.as_ref().map(|_| vec![0.0; theta.len()]);
        let mut z = vec![0.0; k];
        for r in 0..self.rows {
            let x = &self.x[r * d..(r + 1) * d];
            for c in 0..k {
                z[c] = b[c] + w[c * d..(c + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
            loss += max + sum.ln() - z[self.y[r]];
            if let Some(g) = g_acc.as_mut() {
                for c in 0..k {
                    let p = (z[c] - max).exp() / sum - if c == self.y[r] { 1.0 } else { 0.0 };
                    for j in 0..d {
                        g[c * d + j] += p * x[j];
                    }
                    g[k * d + c] += p;
                }
            }
        }
        let inv = 1.0 / self.rows as f64;
        let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * PROBE_L2 / 2.0;
        if let (Some(out), Some(g)) = (grad, g_acc) {
            for (i, (o, v)) in out.iter_mut().zip(g).enumerate() {
                *o = v * inv + if i < k * d { PROBE_L2 * theta[i] } else { 0.0 };
            }
        }
        loss * inv + reg
    }
}

/// Fits a probe by gradient descent with Armijo backtracking. Each
/// iteration first tries a Barzilai-Borwein step length. Stops after
/// [`PROBE_PATIENCE`] consecutive improvements below [`PROBE_TOLERANCE`] or
/// [`PROBE_MAX_ITERATIONS`] iterations.
pub fn fit_linear_probe(features: &[f64], dim: usize, labels: &[u32], target: ProbeTarget) -> Result<LinearProbe> {
    let rows = labels.len();
    if dim == 0 || features.len() != rows * dim {
        return Err(Error::InvalidInput(format!(
            "{} feature values for {rows} labels of width {dim}",
            features.len()
        )));
    }
    let index: BTreeMap<u32, usize> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    if index.len() < 2 {
        return Err(Error::InvalidInput("a probe needs at least two classes".into()));
    }
    let classes: Vec<u32> = index.keys().copied().collect();
    let y: Vec<usize> = labels.iter().map(|l| index[l]).collect();

    let mut mean = vec![0.0; dim];
    let mut scale = vec![0.0; dim];
    for row in features.chunks_exact(dim) {
        for j in 0..dim {
            mean[j] += row[j] / rows as f64;
        }
    }
    for row in features.chunks_exact(dim) {
        for j in 0..dim {
            scale[j] += (row[j] - mean[j]).powi(2) / rows as f64;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let x: Vec<f64> = features
        .chunks_exact(dim)
        .flat_map(|row| (0..dim).map(|j| (row[j] - mean[j]) / scale[j]).collect::<Vec<_>>())
        .collect();
    let k = classes.len();
    let problem = Problem { x: &x, y: &y, rows, dim, classes: k };

    let n_theta = k * dim + k;
    let mut theta = vec![0.0; n_theta];
    let mut grad = vec![0.0; n_theta];
    let mut loss = problem.eval(&theta, Some(&mut grad));
    let mut history = vec![loss];
    let mut step = 1.0;
    let mut quiet = 0;
    let mut trial = vec![0.0; n_theta];
    let mut trial_grad = vec![0.0; n_theta];
    for _ in 0..PROBE_MAX_ITERATIONS {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2 == 0.0 {
            break;
        }
        let mut alpha = step;
        let accepted = loop {
            for i in 0..n_theta {
                trial[i] = theta[i] - alpha * grad[i];
            }
            let f = problem.eval(&trial, None);
            if f <= loss - 1e-4 * alpha * g2 {
                break Some(f);
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                break None;
            }
        };
        let Some(new_loss) = accepted else { break };
        problem.eval(&trial, Some(&mut trial_grad));
        // Barzilai-Borwein length for the next trial step.
        let (mut sy, mut ss) = (0.0, 0.0);
        for i in 0..n_theta {
            let s = trial[i] - theta[i];
            sy += s * (trial_grad[i] - grad[i]);
            ss += s * s;
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-6, 1e6) } else { alpha * 2.0 };
        std::mem::swap(&mut theta, &mut trial);
        std::mem::swap(&mut grad, &mut trial_grad);
        let improvement = loss - new_loss;
        loss = new_loss;
        history.push(loss);
        quiet = if improvement < PROBE_TOLERANCE { quiet + 1 } else { 0 };
        if quiet >= PROBE_PATIENCE {
            break;
        }
    }
    let bias = theta.split_off(k * dim);
    Ok(LinearProbe {
        target,
        dim,
        classes,
        mean,
        scale,
        weights: theta,
        bias,
        loss_history: history,
    })
}

/// Fraction of `rows` whose predicted class equals the label.
pub fn probe_accuracy(probe: &LinearProbe, features: &[f64], labels: &[u32], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let hits = rows
        .par_iter()
        .filter(|&&r| probe.predict(&features[r * probe.dim..(r + 1) * probe.dim]) == labels[r])
        .count();
    hits as f64 / rows.len() as f64
}

fn gather(features: &[f64], dim: usize, labels: &[u32], rows: &[usize]) -> (Vec<f64>, Vec<u32>) {
    let x = rows.iter().flat_map(|&r| features[r * dim..(r + 1) * dim].iter().copied()).collect();
    let y = rows.iter().map(|&r| labels[r]).collect();
    (x, y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome {
    /// Accuracy on the held-out part of the dataset.
    pub accuracy: f64,
    /// Accuracy on the rows the probe was fitted on.
    pub fit_accuracy: f64,
    pub probe: LinearProbe,
}

/// Fits on a seeded 80% of `features` and scores on the remaining 20%.
pub fn evaluate_features(
    features: &[f64],
    dim: usize,
    labels: &[u32],
    target: ProbeTarget,
    seed: u64,
) -> Result<ProbeOutcome> {
    let (fit_rows, held_rows) = split_indices(labels.len(), seed);
    let (x, y) = gather(features, dim, labels, &fit_rows);
    let probe = fit_linear_probe(&x, dim, &y, target)?;
    Ok(ProbeOutcome {
        accuracy: probe_accuracy(&probe, features, labels, &held_rows),
        fit_accuracy: probe_accuracy(&probe, features, labels, &fit_rows),
        probe,
    })
}

/// Held-out accuracies on one dataset for both targets: `(object, background)`.
pub fn evaluate_dataset<S: Scalar>(
    params: &EncoderParams<S>,
    dataset: &ProbeDataset,
    seed: u64,
) -> Result<(f64, f64)> {
    let latents = extract_features(params, dataset)?;
    let feats: Vec<f64> = latents.data.iter().map(|v| v.to_f64_lossy()).collect();
    let object = evaluate_features(&feats, latents.dim, &dataset.object_labels, ProbeTarget::Object, seed)?;
    let distinct_bg = dataset.background_labels.iter().collect::<std::collections::HashSet<_>>().len();
    // A single-background dataset has nothing to classify.
    let background = if distinct_bg >= 2 {
        evaluate_features(&feats, latents.dim, &dataset.background_labels, ProbeTarget::Background, seed)?.accuracy
    } else {
        f64::NAN
    };
    Ok((object.accuracy, background))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub step: u64,
    pub seed: u64,
    pub latent_dim: usize,
    /// Validation object accuracy.
    pub voa: f64,
    /// Test object accuracy.
    pub toa: f64,
    /// Validation background accuracy.
    pub vba: f64,
    /// Test background accuracy.
    pub tba: f64,
}

impl ProbeReport {
    pub fn metrics(&self) -> [(&'static str, f64); 4] {
        [("voa", self.voa), ("toa", self.toa), ("vba", self.vba), ("tba", self.tba)]
    }
}

pub fn probe_report<S: Scalar>(
    params: &EncoderParams<S>,
    validation: &ProbeDataset,
    test: &ProbeDataset,
    step: u64,
    seed: u64,
) -> Result<ProbeReport> {
    let (voa, vba) = evaluate_dataset(params, validation, seed)?;
    let (toa, tba) = evaluate_dataset(params, test, seed)?;
    Ok(ProbeReport {
        step,
        seed,
        latent_dim: params.latent_dim,
        voa,
        toa,
        vba,
        tba,
    })
}

/// Per-pixel input sensitivity, row-major, in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl SaliencyMap {
    /// Mean saliency inside and outside a pixel mask.
    pub fn mean_inside_outside(&self, mask: &[bool]) -> (f64, f64) {
        let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0, 0.0, 0);
        for (&v, &m) in self.values.iter().zip(mask) {
            if m {
                sin += f64::from(v);
                nin += 1;
            } else {
                sout += f64::from(v);
                nout += 1;
            }
        }
        (sin / nin.max(1) as f64, sout / nout.max(1) as f64)
    }

    /// Grayscale binary PGM.
    pub fn write_pgm(&self, out: &mut impl std::io::Write) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.values.iter().map(|&v| crate::renderer::quantize(v)).collect();
        out.write_all(&bytes)?;
        Ok(())
    }
}

/// Gradient magnitude of the anchor's contrastive loss with respect to the
/// anchor's pixels: `-sim(a,p)/τ + log Σ_k exp(sim(a,k)/τ)` over the given
/// negatives, encoder in eval mode. Heatmap is the channel-wise maximum of
/// `|∂L/∂pixel|`, divided by its maximum.
pub fn saliency_map<S: Scalar>(
    params: &EncoderParams<S>,
    frame: &[u8],
    positive: &[u8],
    negatives: &[&[u8]],
    size: (usize, usize),
    tau: f64,
) -> Result<SaliencyMap> {
    if negatives.is_empty() {
        return Err(Error::InvalidInput("saliency needs at least one negative".into()));
    }
    let (width, height) = size;
    let mut frames = vec![frame, positive];
    frames.extend_from_slice(negatives);
    let images = ImageBatch::<S>::from_u8(height, width, &frames)?;
    let (lat, mut tape) = encoder_forward(params, &images, Mode::Eval, None)?;
    let tau = S::from_f64_lossy(tau);
    let dim = lat.dim;
    let anchor = lat.row(0);
    let dist = |i: usize| -> (S, Vec<S>) {
        let diff: Vec<S> = anchor.iter().zip(lat.row(i)).map(|(&a, &b)| a - b).collect();
        let d = diff.iter().map(|&v| v * v).sum::<S>().sqrt();
        (d, diff)
    };
    let mut d_lat = vec![S::zero(); lat.data.len()];
    // d(-sim)/du_a = (u_a - u_p)/|u_a - u_p|; likewise with opposite sign on u_p.
    let mut push = |i: usize, coef: S| {
        let (d, diff) = dist(i);
        if d == S::zero() {
            return;
        }
        for t in 0..dim {
            let g = coef * diff[t] / d;
            d_lat[t] += g;
            d_lat[i * dim + t] -= g;
        }
    };
    push(1, S::one() / tau);
    let logits: Vec<S> = (2..lat.batch).map(|i| -dist(i).0 / tau).collect();
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let weights: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: S = weights.iter().copied().sum();
    for (k, w) in weights.iter().enumerate() {
        // d lse / d sim_k = softmax_k / τ, and d sim/du = -d dist/du.
        push(k + 2, -(*w / total) / tau);
    }
    let grads = backward(params, &mut tape, &d_lat, true)?;
    let input = grads.input.expect("input gradient requested");
    let plane = width * height;
    let batch = lat.batch;
    let mut values: Vec<f32> = (0..plane)
        .map(|p| {
            (0..3)
                .map(|c| input[c * batch * plane + p].abs().to_f64_lossy() as f32)
                .fold(0.0, f32::max)
        })
        .collect();
    let peak = values.iter().copied().fold(0.0, f32::max);
    if peak > 0.0 {
        for v in &mut values {
            *v /= peak;
        }
    }
    Ok(SaliencyMap { width, height, values })
}

/// Picks distinct random buffer positions for saliency negatives.
pub fn pick_negatives(len: usize, count: usize, exclude: &[usize], rng: &mut Rng) -> Vec<usize> {
    let pool: Vec<usize> = (0..len).filter(|i| !exclude.contains(i)).collect();
    rand::seq::index::sample(rng, pool.len(), count.min(pool.len()))
        .iter()
        .map(|i| pool[i])
        .collect()
}
