// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Convolutional encoder, its reverse-mode gradients, the time-contrastive
//! loss and the AdamW optimizer.

mod checkpoint;
mod gradcheck;
pub mod layers;
mod loss;
mod optim;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::session::{BufferEntry, ReplayBuffer};
use layers::ConvGeometry;

pub use checkpoint::{config_hash, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gradcheck::{finite_difference_check, GradCheckReport, GRADIENT_CHECKS};
pub use loss::{loss_from_similarities, similarity, simclr_tt_loss};
pub use optim::{adamw_step, OptimizerState};

/// One convolution of the encoder stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

pub const ENCODER_LAYERS: [ConvSpec; 4] = [
    ConvSpec { channels: 64, kernel: 8, stride: 4, padding: 2 },
    ConvSpec { channels: 128, kernel: 4, stride: 2, padding: 1 },
    ConvSpec { channels: 256, kernel: 2, stride: 2, padding: 1 },
    ConvSpec { channels: 256, kernel: 2, stride: 2, padding: 1 },
];

pub const INPUT_CHANNELS: usize = 3;

/// Width of the pooled feature vector fed to the final linear layer.
pub const FEATURE_DIM: usize = ENCODER_LAYERS[ENCODER_LAYERS.len() - 1].channels;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    /// Negative Euclidean distance.
    #[default]
    NegEuclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub temperature: f64,
    pub similarity: Similarity,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Pairs per batch; the loss sees `2 * batch_size` frames.
    pub batch_size: usize,
    pub latent_dim: usize,
    pub dropout: f64,
    /// Apply dropout during training forward passes.
    pub train_dropout: bool,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            temperature: 0.5,
            similarity: Similarity::NegEuclidean,
            learning_rate: 5e-4,
            weight_decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            latent_dim: 20,
            dropout: 0.5,
            train_dropout: true,
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("learner: {m}")));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return bad("learning_rate and weight_decay must be non-negative");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

/// Encoder weights as an ordered tensor registry:
/// `conv{i}.weight [out, in, k, k]`, `conv{i}.bias [out]` for each layer,
/// then `linear.weight [latent, features]`, `linear.bias [latent]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<S> {
    pub latent_dim: usize,
    pub dropout: f64,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> EncoderParams<S> {
    pub fn zeros(latent_dim: usize, dropout: f64) -> Self {
        let mut tensors = Vec::with_capacity(2 * ENCODER_LAYERS.len() + 2);
        let mut in_c = INPUT_CHANNELS;
        for (i, l) in ENCODER_LAYERS.iter().enumerate() {
            let w_shape = vec![l.channels, in_c, l.kernel, l.kernel];
            tensors.push(Tensor {
                name: format!("conv{i}.weight"),
                data: vec![S::zero(); w_shape.iter().product()],
                shape: w_shape,
            });
            tensors.push(Tensor {
                name: format!("conv{i}.bias"),
                shape: vec![l.channels],
                data: vec![S::zero(); l.channels],
            });
            in_c = l.channels;
        }
        tensors.push(Tensor {
            name: "linear.weight".into(),
            shape: vec![latent_dim, FEATURE_DIM],
            data: vec![S::zero(); latent_dim * FEATURE_DIM],
        });
        tensors.push(Tensor {
            name: "linear.bias".into(),
            shape: vec![latent_dim],
            data: vec![S::zero(); latent_dim],
        });
        EncoderParams { latent_dim, dropout, tensors }
    }

    /// Variance-preserving uniform weights, biases zero: `±sqrt(6/fan_in)`
    /// for the convolutions (followed by ReLU), `±sqrt(3/fan_in)` for the
    /// final linear layer.
    pub fn initialize(latent_dim: usize, dropout: f64, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(latent_dim, dropout);
        for t in p.tensors.iter_mut().filter(|t| t.shape.len() > 1) {
            let fan_in: usize = t.shape[1..].iter().product();
            let gain = if t.shape.len() == 4 { 6.0 } else { 3.0 };
            let bound = (gain / fan_in as f64).sqrt();
            for v in &mut t.data {
                *v = S::from_f64_lossy(rng.random_range(-bound..bound));
            }
        }
        p
    }

    pub fn from_config(cfg: &LearnConfig, rng: &mut Rng) -> Self {
        Self::initialize(cfg.latent_dim, cfg.dropout, rng)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.latent_dim, self.dropout)
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn same_shapes(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape == b.shape)
    }

    pub fn cast<T: Scalar>(&self) -> EncoderParams<T> {
        EncoderParams {
            latent_dim: self.latent_dim,
            dropout: self.dropout,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| T::from_f64_lossy(v.to_f64_lossy())).collect(),
                })
                .collect(),
        }
    }

    /// Hash of the raw parameter bits, for bit-exact comparisons.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(self.num_parameters() * 8);
        for t in &self.tensors {
            for v in &t.data {
                bytes.extend_from_slice(&v.to_f64_lossy().to_bits().to_le_bytes());
            }
        }
        crate::sha256_hex(&bytes)
    }

    fn conv(&self, layer: usize) -> (&[S], &[S]) {
        (&self.tensors[2 * layer].data, &self.tensors[2 * layer + 1].data)
    }

    fn linear(&self) -> (&[S], &[S]) {
        let n = self.tensors.len();
        (&self.tensors[n - 2].data, &self.tensors[n - 1].data)
    }
}

/// Images in channel-major `[3, B, H, W]` layout with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch<S> {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> ImageBatch<S> {
    fn from_hwc<T: Copy>(
        height: usize,
        width: usize,
        images: &[&[T]],
        convert: impl Fn(T) -> S,
    ) -> Result<Self> {
        let plane = height * width;
        let batch = images.len();
        let mut data = vec![S::zero(); INPUT_CHANNELS * batch * plane];
        for (b, img) in images.iter().enumerate() {
            if img.len() != plane * INPUT_CHANNELS {
                return Err(Error::InvalidInput(format!(
                    "image {b} has {} values, expected {}",
                    img.len(),
                    plane * INPUT_CHANNELS
                )));
            }
            for (i, px) in img.chunks_exact(INPUT_CHANNELS).enumerate() {
                for (c, &v) in px.iter().enumerate() {
                    data[(c * batch + b) * plane + i] = convert(v);
                }
            }
        }
        Ok(ImageBatch { batch, height, width, data })
    }

    /// From interleaved 8-bit RGB.
    pub fn from_u8(height: usize, width: usize, images: &[&[u8]]) -> Result<Self> {
        Self::from_hwc(height, width, images, |v| S::from_f64_lossy(f64::from(v) / 255.0))
    }

    /// From interleaved float RGB in `[0, 1]`.
    pub fn from_f32(height: usize, width: usize, images: &[&[f32]]) -> Result<Self> {
        Self::from_hwc(height, width, images, |v| S::from_f64_lossy(f64::from(v)))
    }

    pub fn from_entries(entries: &[&BufferEntry]) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::InvalidInput("empty image batch".into()))?;
        let (h, w) = (first.height, first.width);
        let pixels: Vec<&[u8]> = entries.iter().map(|e| &e.pixels[..]).collect();
        Self::from_u8(h, w, &pixels)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Row-major `[batch, dim]` encoder outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Latents<S> {
    pub batch: usize,
    pub dim: usize,
    pub data: Vec<S>,
}

impl<S> Latents<S> {
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

struct LayerRecord<S> {
    geometry: ConvGeometry,
    cols: Vec<S>,
    relu_mask: Vec<bool>,
    dropout_mask: Option<Vec<S>>,
}

/// Forward values needed to differentiate one encoder pass.
pub struct GradientTape<S> {
    consumed: bool,
    batch: usize,
    layers: Vec<LayerRecord<S>>,
    pooled: Vec<S>,
}

impl<S> GradientTape<S> {
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Output height of each conv layer, as recorded by the forward pass.
    pub fn spatial_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.geometry.out_height()).collect()
    }

    /// Dropout multipliers recorded for conv layer `layer`, in `[C, B, H, W]`.
    pub fn dropout_mask(&self, layer: usize) -> Option<&[S]> {
        self.layers.get(layer)?.dropout_mask.as_deref()
    }
}

pub struct Gradients<S> {
    pub params: EncoderParams<S>,
    /// Gradient with respect to the input images, `[3, B, H, W]`.
    pub input: Option<Vec<S>>,
}

/// Conv → ReLU → dropout per layer, global average pool, linear.
///
/// Dropout is inverted (scaled at train time), so eval mode is the identity.
pub fn encoder_forward<S: Scalar>(
    params: &EncoderParams<S>,
    images: &ImageBatch<S>,
    mode: Mode,
    mut rng: Option<&mut Rng>,
) -> Result<(Latents<S>, GradientTape<S>)> {
    let expected = INPUT_CHANNELS * images.batch * images.height * images.width;
    if images.batch == 0 || images.data.len() != expected {
        return Err(Error::InvalidInput(format!(
            "image batch holds {} values, expected {expected} (non-empty)",
            images.data.len()
        )));
    }
    if mode == Mode::Train && rng.is_none() && params.dropout > 0.0 {
        return Err(Error::InvalidInput("train mode needs an rng for dropout".into()));
    }
    let batch = images.batch;
    let (mut h, mut w, mut in_c) = (images.height, images.width, INPUT_CHANNELS);
    let mut x = images.data.clone();
    let mut records = Vec::with_capacity(ENCODER_LAYERS.len());
    for (l, spec) in ENCODER_LAYERS.iter().enumerate() {
        if h + 2 * spec.padding < spec.kernel || w + 2 * spec.padding < spec.kernel {
            return Err(Error::InvalidInput(format!("{w}x{h} input too small for conv layer {l}")));
        }
        let g = ConvGeometry {
            in_channels: in_c,
            out_channels: spec.channels,
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
            batch,
            height: h,
            width: w,
        };
        let (weight, bias) = params.conv(l);
        let (mut out, cols) = layers::conv_forward(&x, weight, bias, &g);
        let relu_mask = layers::relu_forward(&mut out);
        let dropout_mask = match (mode, rng.as_deref_mut()) {
            (Mode::Train, Some(r)) if params.dropout > 0.0 => {
                let m = layers::dropout_mask(out.len(), params.dropout, r);
                layers::apply_mask(&mut out, &m);
                Some(m)
            }
            _ => None,
        };
        records.push(LayerRecord { geometry: g, cols, relu_mask, dropout_mask });
        (h, w, in_c) = (g.out_height(), g.out_width(), spec.channels);
        x = out;
    }
    let pooled = layers::avgpool_forward(&x, in_c, batch, h * w);
    let (lw, lb) = params.linear();
    let data = layers::linear_forward(&pooled, lw, lb, batch, in_c);
    let latents = Latents { batch, dim: params.latent_dim, data };
    let tape = GradientTape { consumed: false, batch, layers: records, pooled };
    Ok((latents, tape))
}

/// Reverse pass over a recorded forward. Consumes the tape's buffers.
pub fn backward<S: Scalar>(
    params: &EncoderParams<S>,
    tape: &mut GradientTape<S>,
    d_latents: &[S],
    want_input: bool,
) -> Result<Gradients<S>> {
    if tape.consumed {
        return Err(Error::InvalidState("gradient tape already consumed".into()));
    }
    if d_latents.len() != tape.batch * params.latent_dim {
        return Err(Error::InvalidInput(format!(
            "upstream gradient has {} values, expected {}",
            d_latents.len(),
            tape.batch * params.latent_dim
        )));
    }
    tape.consumed = true;
    let batch = tape.batch;
    let mut grads = params.zeros_like();
    let n_tensors = grads.tensors.len();

    let (lw, _) = params.linear();
    let lin = layers::linear_backward(d_latents, &tape.pooled, lw, batch, FEATURE_DIM);
    grads.tensors[n_tensors - 2].data = lin.weight;
    grads.tensors[n_tensors - 1].data = lin.bias;

    let last = tape.layers.last().expect("encoder has layers").geometry;
    let mut upstream = layers::avgpool_backward(
        &lin.input,
        last.out_channels,
        batch,
        last.out_height() * last.out_width(),
    );
    let mut input_grad = None;
    for l in (0..tape.layers.len()).rev() {
        let rec = &mut tape.layers[l];
        if let Some(mask) = &rec.dropout_mask {
            layers::apply_mask(&mut upstream, mask);
        }
        layers::relu_backward(&mut upstream, &rec.relu_mask);
        let cols = std::mem::take(&mut rec.cols);
        let need_input = l > 0 || want_input;
        let (weight, _) = params.conv(l);
        let g = layers::conv_backward(&upstream, &cols, weight, &rec.geometry, need_input);
        grads.tensors[2 * l].data = g.weight;
        grads.tensors[2 * l + 1].data = g.bias;
        match g.input {
            Some(dx) if l > 0 => upstream = dx,
            dx => input_grad = dx,
        }
    }
    tape.layers.clear();
    tape.pooled.clear();
    Ok(Gradients { params: grads, input: input_grad })
}

/// Latents for a set of frames in eval mode, batched to bound memory.
pub fn encode_eval<S: Scalar>(params: &EncoderParams<S>, images: &ImageBatch<S>) -> Result<Latents<S>> {
    Ok(encoder_forward(params, images, Mode::Eval, None)?.0)
}

/// One optimization step on a batch drawn from the buffer. Returns the loss.
pub fn train_step<S: Scalar>(
    buf: &ReplayBuffer,
    params: &mut EncoderParams<S>,
    state: &mut OptimizerState<S>,
    cfg: &LearnConfig,
    rng: &mut Rng,
) -> Result<S> {
    let batch = buf.sample_contrastive_batch(cfg.batch_size, rng)?;
    let entries: Vec<&BufferEntry> = batch.frame_order().into_iter().map(|i| buf.entry(i)).collect();
    let images = ImageBatch::from_entries(&entries)?;
    let mode = if cfg.train_dropout { Mode::Train } else { Mode::Eval };
    let (latents, mut tape) = encoder_forward(params, &images, mode, Some(rng))?;
    let tau = S::from_f64_lossy(cfg.temperature);
    let (loss, d_latents) = simclr_tt_loss(&latents.data, latents.dim, tau)?;
    let grads = backward(params, &mut tape, &d_latents, false)?;
    adamw_step(params, &grads.params, state, cfg)?;
    Ok(loss)
}
