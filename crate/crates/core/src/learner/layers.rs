// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Forward and reverse kernels for the encoder's building blocks.
//!
//! Activations use a channel-major `[C, B, H, W]` layout so a whole batch
//! goes through each convolution as a single matrix product:
//! `out[C_out, B*OH*OW] = W[C_out, C_in*K*K] * cols[C_in*K*K, B*OH*OW]`.

use rand::Rng as _;

use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Rows of the unfolded input.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Columns of the unfolded input.
    pub fn positions(&self) -> usize {
        self.batch * self.out_height() * self.out_width()
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.batch * self.height * self.width
    }

    /// Input coordinate feeding output `o` through kernel tap `t`, if not
    /// in the zero padding.
    fn source(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + t) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

pub fn im2col<S: Scalar>(x: &[S], g: &ConvGeometry) -> Vec<S> {
    let (oh, ow) = (g.out_height(), g.out_width());
    let cols_per_row = g.positions();
    let mut cols = vec![S::zero(); g.patch_len() * cols_per_row];
    for c in 0..g.in_channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * cols_per_row..(row + 1) * cols_per_row];
                for b in 0..g.batch {
                    let plane = &x[(c * g.batch + b) * g.height * g.width..][..g.height * g.width];
                    for oy in 0..oh {
                        let Some(iy) = g.source(oy, ky, g.height) else { continue };
                        let out_row = &mut dst[(b * oh + oy) * ow..][..ow];
                        for (ox, slot) in out_row.iter_mut().enumerate() {
                            if let Some(ix) = g.source(ox, kx, g.width) {
                                *slot = plane[iy * g.width + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub fn col2im<S: Scalar>(cols: &[S], g: &ConvGeometry) -> Vec<S> {
    let (oh, ow) = (g.out_height(), g.out_width());
    let cols_per_row = g.positions();
    let mut x = vec![S::zero(); g.input_len()];
    for c in 0..g.in_channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * cols_per_row..(row + 1) * cols_per_row];
                for b in 0..g.batch {
                    let plane = &mut x[(c * g.batch + b) * g.height * g.width..][..g.height * g.width];
                    for oy in 0..oh {
                        let Some(iy) = g.source(oy, ky, g.height) else { continue };
                        let in_row = &src[(b * oh + oy) * ow..][..ow];
                        for (ox, &v) in in_row.iter().enumerate() {
                            if let Some(ix) = g.source(ox, kx, g.width) {
                                plane[iy * g.width + ix] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Returns `(output [C_out, B, OH, OW], unfolded input)`.
pub fn conv_forward<S: Scalar>(x: &[S], weight: &[S], bias: &[S], g: &ConvGeometry) -> (Vec<S>, Vec<S>) {
    let cols = im2col(x, g);
    let (k, n) = (g.patch_len(), g.positions());
    let mut out = vec![S::zero(); g.out_channels * n];
    for (o, row) in out.chunks_exact_mut(n).enumerate() {
        row.fill(bias[o]);
    }
    S::gemm(
        g.out_channels,
        k,
        n,
        S::one(),
        weight,
        (k as isize, 1),
        &cols,
        (n as isize, 1),
        S::one(),
        &mut out,
        (n as isize, 1),
    );
    (out, cols)
}

pub struct ConvGrads<S> {
    pub weight: Vec<S>,
    pub bias: Vec<S>,
    pub input: Option<Vec<S>>,
}

pub fn conv_backward<S: Scalar>(
    d_out: &[S],
    cols: &[S],
    weight: &[S],
    g: &ConvGeometry,
    need_input: bool,
) -> ConvGrads<S> {
    let (k, n) = (g.patch_len(), g.positions());
    let mut d_weight = vec![S::zero(); g.out_channels * k];
    // dW = dOut * cols^T
    S::gemm(
        g.out_channels,
        n,
        k,
        S::one(),
        d_out,
        (n as isize, 1),
        cols,
        (1, n as isize),
        S::zero(),
        &mut d_weight,
        (k as isize, 1),
    );
    let d_bias = d_out.chunks_exact(n).map(|row| row.iter().copied().sum()).collect();
    let input = need_input.then(|| {
        // dCols = W^T * dOut
        let mut d_cols = vec![S::zero(); k * n];
        S::gemm(
            k,
            g.out_channels,
            n,
            S::one(),
            weight,
            (1, k as isize),
            d_out,
            (n as isize, 1),
            S::zero(),
            &mut d_cols,
            (n as isize, 1),
        );
        col2im(&d_cols, g)
    });
    ConvGrads {
        weight: d_weight,
        bias: d_bias,
        input,
    }
}

/// In-place ReLU; returns the mask of positive pre-activations.
pub fn relu_forward<S: Scalar>(x: &mut [S]) -> Vec<bool> {
    x.iter_mut()
        .map(|v| {
            let on = *v > S::zero();
            if !on {
                *v = S::zero();
            }
            on
        })
        .collect()
}

pub fn relu_backward<S: Scalar>(d: &mut [S], mask: &[bool]) {
    for (g, &on) in d.iter_mut().zip(mask) {
        if !on {
            *g = S::zero();
        }
    }
}

/// Inverted-dropout multipliers: `0` with probability `p`, else `1/(1-p)`.
pub fn dropout_mask<S: Scalar>(len: usize, p: f64, rng: &mut Rng) -> Vec<S> {
    let keep = S::from_f64_lossy(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.random::<f64>() < p { S::zero() } else { keep })
        .collect()
}

pub fn apply_mask<S: Scalar>(x: &mut [S], mask: &[S]) {
    for (v, &m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}

/// Global average over spatial positions: `[C, B, P] -> [B, C]`.
pub fn avgpool_forward<S: Scalar>(x: &[S], channels: usize, batch: usize, positions: usize) -> Vec<S> {
    let scale = S::one() / S::from_f64_lossy(positions as f64);
    let mut pooled = vec![S::zero(); batch * channels];
    for c in 0..channels {
        for b in 0..batch {
            let s: S = x[(c * batch + b) * positions..][..positions].iter().copied().sum();
            pooled[b * channels + c] = s * scale;
        }
    }
    pooled
}

pub fn avgpool_backward<S: Scalar>(d_pooled: &[S], channels: usize, batch: usize, positions: usize) -> Vec<S> {
    let scale = S::one() / S::from_f64_lossy(positions as f64);
    let mut dx = vec![S::zero(); channels * batch * positions];
    for c in 0..channels {
        for b in 0..batch {
            dx[(c * batch + b) * positions..][..positions].fill(d_pooled[b * channels + c] * scale);
        }
    }
    dx
}

/// `y[B, D] = x[B, C] * W[D, C]^T + b`.
pub fn linear_forward<S: Scalar>(x: &[S], weight: &[S], bias: &[S], batch: usize, inputs: usize) -> Vec<S> {
    let outputs = bias.len();
    let mut y: Vec<S> = (0..batch).flat_map(|_| bias.iter().copied()).collect();
    S::gemm(
        batch,
        inputs,
        outputs,
        S::one(),
        x,
        (inputs as isize, 1),
        weight,
        (1, inputs as isize),
        S::one(),
        &mut y,
        (outputs as isize, 1),
    );
    y
}

pub struct LinearGrads<S> {
    pub weight: Vec<S>,
    pub bias: Vec<S>,
    pub input: Vec<S>,
}

pub fn linear_backward<S: Scalar>(dy: &[S], x: &[S], weight: &[S], batch: usize, inputs: usize) -> LinearGrads<S> {
    let outputs = weight.len() / inputs;
    let mut d_weight = vec![S::zero(); outputs * inputs];
    S::gemm(
        outputs,
        batch,
        inputs,
        S::one(),
        dy,
        (1, outputs as isize),
        x,
        (inputs as isize, 1),
        S::zero(),
        &mut d_weight,
        (inputs as isize, 1),
    );
    let mut d_bias = vec![S::zero(); outputs];
    for row in dy.chunks_exact(outputs) {
        for (acc, &v) in d_bias.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut d_input = vec![S::zero(); batch * inputs];
    S::gemm(
        batch,
        outputs,
        inputs,
        S::one(),
        dy,
        (outputs as isize, 1),
        weight,
        (inputs as isize, 1),
        S::zero(),
        &mut d_input,
        (inputs as isize, 1),
    );
    LinearGrads {
        weight: d_weight,
        bias: d_bias,
        input: d_input,
    }
}
