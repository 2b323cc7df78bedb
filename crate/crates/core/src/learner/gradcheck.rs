// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Central finite differences against the analytic gradients, in `f64`.

use rand::Rng as _;

use super::layers::{self, ConvGeometry};
use super::{backward, encoder_forward, simclr_tt_loss, EncoderParams, ImageBatch, Mode, ENCODER_LAYERS};
use crate::error::{Error, Result};
use crate::rng::{seeded, stream, Rng};

/// Names accepted by [`finite_difference_check`].
pub const GRADIENT_CHECKS: [&str; 7] = ["linear", "avgpool", "relu", "dropout", "conv", "loss", "pipeline"];

const STEP: f64 = 1e-3;
const PROBES_PER_TENSOR: usize = 5;
/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;
const CHECK_SEED: u64 = 0x5eed;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub op: String,
    pub max_rel_error: f64,
    /// Tensor holding the worst probe.
    pub worst_tensor: String,
    pub probes: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

struct Probe {
    name: String,
    values: Vec<f64>,
    analytic: Vec<f64>,
}

fn uniform(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Probes `PROBES_PER_TENSOR` random coordinates per tensor. `objective`
/// returns `None` when a perturbation changed a non-smooth branch, in which
/// case another coordinate is drawn.
fn run_probes(
    op: &str,
    tolerance: f64,
    probes: &mut [Probe],
    rng: &mut Rng,
    objective: &mut dyn FnMut(&[Probe]) -> Option<f64>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        op: op.to_string(),
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        probes: 0,
        tolerance,
    };
    for t in 0..probes.len() {
        let mut done = 0;
        for _ in 0..200 * PROBES_PER_TENSOR {
            if done == PROBES_PER_TENSOR {
                break;
            }
            let i = rng.random_range(0..probes[t].values.len());
            let orig = probes[t].values[i];
            probes[t].values[i] = orig + STEP;
            let plus = objective(probes);
            probes[t].values[i] = orig - STEP;
            let minus = objective(probes);
            probes[t].values[i] = orig;
            let (Some(plus), Some(minus)) = (plus, minus) else { continue };
            let numeric = (plus - minus) / (2.0 * STEP);
            let analytic = probes[t].analytic[i];
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(REL_FLOOR);
            if err > report.max_rel_error || report.worst_tensor.is_empty() {
                report.max_rel_error = err;
                report.worst_tensor = probes[t].name.clone();
            }
            done += 1;
            report.probes += 1;
        }
        if done < PROBES_PER_TENSOR {
            return Err(Error::InvalidState(format!(
                "{op}: could not place {PROBES_PER_TENSOR} probes on {} away from kinks",
                probes[t].name
            )));
        }
    }
    Ok(report)
}

/// Worst relative error between analytic and central-difference gradients
/// for one registered operation, on randomized small shapes.
pub fn finite_difference_check(op_name: &str, tolerance: f64) -> Result<GradCheckReport> {
    let mut rng = seeded(CHECK_SEED, stream::INIT);
    match op_name {
        "linear" => check_linear(tolerance, &mut rng),
        "avgpool" => check_avgpool(tolerance, &mut rng),
        "relu" => check_relu(tolerance, &mut rng),
        "dropout" => check_dropout(tolerance, &mut rng),
        "conv" => check_conv(tolerance, &mut rng),
        "loss" => check_loss(tolerance, &mut rng),
        "pipeline" => check_pipeline(tolerance, &mut rng),
        other => Err(Error::InvalidInput(format!(
            "unknown gradient check {other:?}; expected one of {}",
            GRADIENT_CHECKS.join(", ")
        ))),
    }
}

fn check_linear(tol: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    let (batch, inputs, outputs) = (3, 7, 5);
    let x = uniform(batch * inputs, rng);
    let w = uniform(outputs * inputs, rng);
    let b = uniform(outputs, rng);
    let r = uniform(batch * outputs, rng);
    let g = layers::linear_backward(&r, &x, &w, batch, inputs);
    let mut probes = [
        Probe { name: "input".into(), values: x, analytic: g.input },
        Probe { name: "weight".into(), values: w, analytic: g.weight },
        Probe { name: "bias".into(), values: b, analytic: g.bias },
    ];
    run_probes("linear", tol, &mut probes, rng, &mut |p| {
        Some(dot(&r, &layers::linear_forward(&p[0].values, &p[1].values, &p[2].values, batch, inputs)))
    })
}

fn check_avgpool(tol: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    let (c, b, n) = (4, 2, 9);
    let x = uniform(c * b * n, rng);
    let r = uniform(b * c, rng);
    let analytic = layers::avgpool_backward(&r, c, b, n);
    let mut probes = [Probe { name: "input".into(), values: x, analytic }];
    run_probes("avgpool", tol, &mut probes, rng, &mut |p| {
        Some(dot(&r, &layers::avgpool_forward(&p[0].values, c, b, n)))
    })
}

fn check_relu(tol: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    // Keep every pre-activation at least 10x the step away from the kink.
    let x: Vec<f64> = (0..40)
        .map(|_| {
            let mag = rng.random_range(0.01 + 10.0 * STEP..1.0);
            if rng.random_bool(0.5) { mag } else { -mag }
        })
        .collect();
    let r = uniform(x.len(), rng);
    let mut out = x.clone();
    let mask = layers::relu_forward(&mut out);
    let mut analytic = r.clone();
    layers::relu_backward(&mut analytic, &mask);
    let mut probes = [Probe { name: "input".into(), values: x, analytic }];
    run_probes("relu", tol, &mut probes, rng, &mut |p| {
        let mut y = p[0].values.clone();
        layers::relu_forward(&mut y);
        Some(dot(&r, &y))
    })
}

fn check_dropout(tol: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    let x = uniform(40, rng);
    let r = uniform(40, rng);
    let mask: Vec<f64> = layers::dropout_mask(40, 0.5, rng);
    let mut analytic = r.clone();
    layers::apply_mask(&mut analytic, &mask);
    let mut probes = [Probe { name: "input".into(), values: x, analytic }];
    run_probes("dropout", tol, &mut probes, rng, &mut |p| {
        let mut y = p[0].values.clone();
        layers::apply_mask(&mut y, &mask);
        Some(dot(&r, &y))
    })
}

fn check_conv(tol: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    let mut worst: Option<GradCheckReport> = None;
    let mut total = 0;
    for (l, spec) in ENCODER_LAYERS.iter().enumerate() {
        let g = ConvGeometry {
            in_channels: 2,
            out_channels: 3,
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
            batch: 2,
            height: 9,
            width: 10,
        };
        let x = uniform(g.input_len(), rng);
        let w = uniform(g.out_channels * g.patch_len(), rng);
        let b = uniform(g.out_channels, rng);
        let (out, cols) = layers::conv_forward(&x, &w, &b, &g);
        let r = uniform(out.len(), rng);
        let grads = layers::conv_backward(&r, &cols, &w, &g, true);
        let mut probes = [
            Probe { name: format!("conv{l}.input"), values: x, analytic: grads.input.unwrap_or_default() },
            Probe { name: format!("conv{l}.weight"), values: w, analytic: grads.weight },
            Probe { name: format!("conv{l}.bias"), values: b, analytic: grads.bias },
        ];
        let rep = run_probes("conv", tol, &mut probes, rng, &mut |p| {
            Some(dot(&r, &layers::conv_forward(&p[0].values, &p[1].values, &p[2].values, &g).0))
        })?;
        total += rep.probes;
        if worst.as_ref().is_none_or(|w| rep.max_rel_error > w.max_rel_error) {
            worst = Some(rep);
        }
    }
    let mut rep = worst.expect("at least one layer");
    rep.probes = total;
    Ok(rep)
}

fn check_loss(tol: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    let (n_pairs, dim) = (4, 6);
    let z = uniform(2 * n_pairs * dim, rng);
    let (_, analytic) = simclr_tt_loss(&z, dim, 0.5)?;
    let mut probes = [Probe { name: "latents".into(), values: z, analytic }];
    run_probes("loss", tol, &mut probes, rng, &mut |p| simclr_tt_loss(&p[0].values, dim, 0.5).ok().map(|r| r.0))
}

/// Image → encoder (train mode, dropout replayed) → loss, probing every
/// parameter tensor and the input pixels.
fn check_pipeline(tol: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    let (n_pairs, size, latent) = (2, 16, 8);
    let params = EncoderParams::<f64>::initialize(latent, 0.5, rng);
    let images = ImageBatch {
        batch: 2 * n_pairs,
        height: size,
        width: size,
        data: (0..3 * 2 * n_pairs * size * size).map(|_| rng.random::<f64>()).collect(),
    };
    let dropout_seed: u64 = rng.random();
    let forward = |params: &EncoderParams<f64>, images: &ImageBatch<f64>| {
        let mut drop_rng = seeded(dropout_seed, stream::DROPOUT);
        encoder_forward(params, images, Mode::Train, Some(&mut drop_rng))
    };
    let (lat, mut tape) = forward(&params, &images)?;
    let base_masks: Vec<Vec<bool>> = tape.layers.iter().map(|l| l.relu_mask.clone()).collect();
    let (_, d_lat) = simclr_tt_loss(&lat.data, latent, 0.5)?;
    let grads = backward(&params, &mut tape, &d_lat, true)?;

    let mut probes: Vec<Probe> = params
        .tensors()
        .iter()
        .zip(grads.params.tensors())
        .map(|(p, g)| Probe { name: p.name.clone(), values: p.data.clone(), analytic: g.data.clone() })
        .collect();
    probes.push(Probe {
        name: "input".into(),
        values: images.data.clone(),
        analytic: grads.input.unwrap_or_default(),
    });
    let n_params = params.tensors().len();
    let mut scratch = params.clone();
    let mut img = images.clone();
    run_probes("pipeline", tol, &mut probes, rng, &mut |p| {
        for (t, probe) in scratch.tensors_mut().iter_mut().zip(&p[..n_params]) {
            t.data.copy_from_slice(&probe.values);
        }
        img.data.copy_from_slice(&p[n_params].values);
        let (lat, tape) = forward(&scratch, &img).ok()?;
        let same_branch = tape.layers.iter().zip(&base_masks).all(|(l, m)| &l.relu_mask == m);
        if !same_branch {
            return None;
        }
        simclr_tt_loss(&lat.data, latent, 0.5).ok().map(|r| r.0)
    })
}
