// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

use super::{EncoderParams, LearnConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// AdamW moment accumulators, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<S> {
    pub first_moment: EncoderParams<S>,
    pub second_moment: EncoderParams<S>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(params: &EncoderParams<S>, cfg: &LearnConfig) -> Self {
        OptimizerState {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }
}

/// `θ ← θ − lr·wd·θ − lr·m̂/(√v̂ + ε)` with bias-corrected moments.
pub fn adamw_step<S: Scalar>(
    params: &mut EncoderParams<S>,
    grads: &EncoderParams<S>,
    state: &mut OptimizerState<S>,
    cfg: &LearnConfig,
) -> Result<()> {
    if !params.same_shapes(grads) || !params.same_shapes(&state.first_moment) {
        return Err(Error::InvalidInput("parameter, gradient and moment shapes differ".into()));
    }
    state.step += 1;
    let t = state.step as f64;
    let f = S::from_f64_lossy;
    let (b1, b2) = (f(state.beta1), f(state.beta2));
    let (c1, c2) = (f(1.0 - state.beta1), f(1.0 - state.beta2));
    let bc1 = f(1.0 - state.beta1.powf(t));
    let bc2 = f(1.0 - state.beta2.powf(t));
    let (lr, wd, eps) = (f(cfg.learning_rate), f(cfg.weight_decay), f(state.epsilon));
    let tensors = params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(state.first_moment.tensors.iter_mut().zip(state.second_moment.tensors.iter_mut()));
    for ((p, g), (m, v)) in tensors {
        for (((theta, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta = *theta - lr * wd * *theta - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
