// Copyright 2026 the evlab authors
// SPDX-License-Identifier: Apache-2.0

//! Toddler-like visual statistics applied to rendered frames.
//!
//! Composition order is fixed: depth of field first (lens optics in scene
//! space), then foveation (retinal sampling around the gaze point).
//!
//! All blur kernels are evaluated as `x_c + sum_i w_i (x_i - x_c)`, anchored
//! at the center sample, so constant regions are reproduced exactly.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::renderer::{GazeOffset, RetinalFrame};
use crate::rng::Rng;

/// Blur radii below this many pixels leave a pixel untouched.
pub const MIN_BLUR_PX: f32 = 0.25;
/// Resolution at which circle-of-confusion constants are expressed.
pub const REFERENCE_WIDTH: f32 = 128.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaccadeConfig {
    /// Per-axis standard deviation of the gaze offset, degrees.
    pub amplitude_deg: f32,
}

impl Default for SaccadeConfig {
    fn default() -> Self {
        SaccadeConfig { amplitude_deg: 3.0 }
    }
}

impl SaccadeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=10.0).contains(&self.amplitude_deg) {
            return Err(Error::InvalidConfig(format!(
                "saccade amplitude_deg must lie in [0, 10], got {}",
                self.amplitude_deg
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApertureConfig {
    pub enabled: bool,
    pub aperture_number: f32,
    /// Circle-of-confusion constant `K`, in pixels at the reference width.
    pub coc_scale: f32,
    /// Largest blur std, in pixels at the reference width.
    pub max_blur_px: f32,
    /// Number of depth bins for the blur.
    pub bins: usize,
}

impl Default for ApertureConfig {
    fn default() -> Self {
        ApertureConfig {
            enabled: true,
            aperture_number: 20.0,
            coc_scale: 13.5,
            max_blur_px: 8.0,
            bins: 16,
        }
    }
}

impl ApertureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=20.0).contains(&self.aperture_number) {
            return Err(Error::InvalidConfig(format!(
                "aperture_number must lie in [0.5, 20], got {}",
                self.aperture_number
            )));
        }
        if self.coc_scale < 0.0 || self.max_blur_px < MIN_BLUR_PX || self.bins == 0 {
            return Err(Error::InvalidConfig(
                "coc_scale must be non-negative, max_blur_px >= 0.25 and bins > 0".into(),
            ));
        }
        Ok(())
    }

    /// Blur std in pixels for a point at depth `z` when focused at `focus`,
    /// for an image `width` pixels wide.
    pub fn blur_radius(&self, z: f32, focus: f32, width: usize) -> f32 {
        let scale = width as f32 / REFERENCE_WIDTH;
        let r = self.coc_scale * scale / self.aperture_number * (1.0 / z - 1.0 / focus).abs();
        r.clamp(0.0, self.max_blur_px * scale)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoveationConfig {
    pub enabled: bool,
    /// Pyramid depth, including the full-resolution level.
    pub levels: usize,
    /// Eccentricity at which resolution halves, degrees.
    pub half_res_eccentricity_deg: f32,
}

impl Default for FoveationConfig {
    fn default() -> Self {
        FoveationConfig {
            enabled: false,
            levels: 4,
            half_res_eccentricity_deg: 8.0,
        }
    }
}

impl FoveationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=6).contains(&self.levels) {
            return Err(Error::InvalidConfig(format!(
                "foveation levels must lie in [2, 6], got {}",
                self.levels
            )));
        }
        if self.half_res_eccentricity_deg <= 0.0 {
            return Err(Error::InvalidConfig(
                "half_res_eccentricity_deg must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Fractional pyramid level for an eccentricity in degrees.
    pub fn level_at(&self, eccentricity_deg: f32) -> f32 {
        (1.0 + eccentricity_deg / self.half_res_eccentricity_deg).log2()
    }
}

pub fn sample_saccade(cfg: &SaccadeConfig, rng: &mut Rng) -> GazeOffset {
    if cfg.amplitude_deg == 0.0 {
        return GazeOffset::default();
    }
    let normal = Normal::new(0.0f32, cfg.amplitude_deg).expect("validated std");
    GazeOffset {
        yaw_deg: normal.sample(rng),
        pitch_deg: normal.sample(rng),
    }
}

/// Uniform draw in `[lo, hi]`, degenerate ranges included.
pub fn uniform_angle(lo: f32, hi: f32, rng: &mut Rng) -> f32 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Interleaved RGB plane.
#[derive(Clone, Debug)]
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[3 * (y * self.width + x) + c]
    }
}

fn gaussian_weights(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let w: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f32 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable anchored convolution with clamp-to-edge borders.
fn convolve_separable(src: &Plane, weights: &[f32]) -> Plane {
    let r = (weights.len() / 2) as i64;
    let (w, h) = (src.width as i64, src.height as i64);
    let mut tmp = src.data.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let center = src.at(x as usize, y as usize, c);
                let mut acc = 0.0;
                for (k, wt) in weights.iter().enumerate() {
                    let xx = (x + k as i64 - r).clamp(0, w - 1) as usize;
                    acc += wt * (src.at(xx, y as usize, c) - center);
                }
                tmp[(3 * (y * w + x)) as usize + c] = center + acc;
            }
        }
    }
    let tmp = Plane {
        width: src.width,
        height: src.height,
        data: tmp,
    };
    let mut out = tmp.data.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let center = tmp.at(x as usize, y as usize, c);
                let mut acc = 0.0;
                for (k, wt) in weights.iter().enumerate() {
                    let yy = (y + k as i64 - r).clamp(0, h - 1) as usize;
                    acc += wt * (tmp.at(x as usize, yy, c) - center);
                }
                out[(3 * (y * w + x)) as usize + c] = center + acc;
            }
        }
    }
    Plane {
        width: src.width,
        height: src.height,
        data: out,
    }
}

fn depth_of(frame: &RetinalFrame) -> Result<&[f32]> {
    match &frame.depth {
        Some(d) if d.len() == frame.width * frame.height => Ok(d),
        Some(_) => Err(Error::InvalidInput("depth channel size mismatch".into())),
        None => Err(Error::InvalidInput("frame has no depth channel".into())),
    }
}

/// Depth-dependent blur around the focus depth (thin-lens circle of
/// confusion), evaluated with `cfg.bins` depth-binned Gaussians.
pub fn apply_depth_of_field(frame: &RetinalFrame, cfg: &ApertureConfig) -> Result<RetinalFrame> {
    let depth = depth_of(frame)?;
    if !cfg.enabled {
        return Ok(frame.clone());
    }
    cfg.validate()?;
    if !(frame.focus_depth > 0.0) {
        return Err(Error::InvalidInput("focus depth must be positive".into()));
    }
    let radii: Vec<f32> = depth
        .iter()
        .map(|&z| cfg.blur_radius(z, frame.focus_depth, frame.width))
        .collect();
    let r_max = cfg.max_blur_px * frame.width as f32 / REFERENCE_WIDTH;
    let bin_width = ((r_max - MIN_BLUR_PX) / cfg.bins as f32).max(f32::EPSILON);
    let bin_of = |r: f32| (((r - MIN_BLUR_PX) / bin_width) as usize).min(cfg.bins - 1);

    let mut used = vec![false; cfg.bins];
    for &r in &radii {
        if r >= MIN_BLUR_PX {
            used[bin_of(r)] = true;
        }
    }
    let src = Plane {
        width: frame.width,
        height: frame.height,
        data: frame.rgb.clone(),
    };
    let mut out = frame.clone();
    for (bin, _) in used.iter().enumerate().filter(|(_, u)| **u) {
        let sigma = MIN_BLUR_PX + (bin as f32 + 0.5) * bin_width;
        let blurred = convolve_separable(&src, &gaussian_weights(sigma));
        for (i, &r) in radii.iter().enumerate() {
            if r >= MIN_BLUR_PX && bin_of(r) == bin {
                for c in 0..3 {
                    out.rgb[3 * i + c] = blurred.data[3 * i + c].clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Unit ray through a continuous pixel position for a pinhole camera.
fn pixel_ray(x: f32, y: f32, width: usize, height: usize, vfov_deg: f32) -> [f32; 3] {
    let tv = (vfov_deg.to_radians() * 0.5).tan();
    let th = tv * width as f32 / height as f32;
    let nx = (2.0 * x / width as f32 - 1.0) * th;
    let ny = (1.0 - 2.0 * y / height as f32) * tv;
    let n = (nx * nx + ny * ny + 1.0).sqrt();
    [nx / n, ny / n, 1.0 / n]
}

/// Angle in degrees between pixel `(px, py)` and the gaze point.
pub fn eccentricity_deg(frame: &RetinalFrame, px: usize, py: usize) -> f32 {
    let a = pixel_ray(px as f32 + 0.5, py as f32 + 0.5, frame.width, frame.height, frame.vertical_fov_deg);
    let b = pixel_ray(frame.gaze_px.0, frame.gaze_px.1, frame.width, frame.height, frame.vertical_fov_deg);
    let cos = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

fn downsample(src: &Plane) -> Plane {
    const BINOMIAL: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let blurred = convolve_separable(src, &BINOMIAL);
    let (w, h) = (src.width.div_ceil(2), src.height.div_ceil(2));
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data.push(blurred.at(2 * x, 2 * y, c));
            }
        }
    }
    Plane {
        width: w,
        height: h,
        data,
    }
}

/// Bilinear lookup of pyramid level `level` at full-resolution pixel
/// `(px, py)`.
fn sample_level(plane: &Plane, level: usize, px: usize, py: usize, c: usize) -> f32 {
    let scale = (1usize << level) as f32;
    let fx = ((px as f32 + 0.5) / scale - 0.5).clamp(0.0, (plane.width - 1) as f32);
    let fy = ((py as f32 + 0.5) / scale - 0.5).clamp(0.0, (plane.height - 1) as f32);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(plane.width - 1), (y0 + 1).min(plane.height - 1));
    let (tx, ty) = (fx - x0 as f32, fy - y0 as f32);
    let lerp = |a: f32, b: f32, t: f32| a + t * (b - a);
    let top = lerp(plane.at(x0, y0, c), plane.at(x1, y0, c), tx);
    let bottom = lerp(plane.at(x0, y1, c), plane.at(x1, y1, c), tx);
    lerp(top, bottom, ty)
}

/// Gaze-contingent multi-resolution blur: each pixel interpolates between
/// the two Gaussian-pyramid levels bracketing
/// `log2(1 + eccentricity / half_res_eccentricity)`.
pub fn apply_foveation(frame: &RetinalFrame, cfg: &FoveationConfig) -> Result<RetinalFrame> {
    cfg.validate()?;
    let (gx, gy) = frame.gaze_px;
    if !(gx >= 0.0 && gy >= 0.0 && gx <= frame.width as f32 && gy <= frame.height as f32) {
        return Err(Error::InvalidInput(format!(
            "gaze ({gx}, {gy}) outside the {}x{} image",
            frame.width, frame.height
        )));
    }
    if !cfg.enabled {
        return Ok(frame.clone());
    }
    let mut pyramid = vec![Plane {
        width: frame.width,
        height: frame.height,
        data: frame.rgb.clone(),
    }];
    for _ in 1..cfg.levels {
        let next = downsample(pyramid.last().expect("non-empty"));
        pyramid.push(next);
    }
    let top = (cfg.levels - 1) as f32;
    let foveal = cfg.half_res_eccentricity_deg / 4.0;
    let mut out = frame.clone();
    for py in 0..frame.height {
        for px in 0..frame.width {
            let ecc = eccentricity_deg(frame, px, py);
            if ecc < foveal {
                continue;
            }
            let level = cfg.level_at(ecc).min(top);
            let lo = level.floor() as usize;
            let hi = (lo + 1).min(cfg.levels - 1);
            let t = level - lo as f32;
            let i = 3 * (py * frame.width + px);
            for c in 0..3 {
                let a = sample_level(&pyramid[lo], lo, px, py, c);
                let b = sample_level(&pyramid[hi], hi, px, py, c);
                out.rgb[i + c] = (a + t * (b - a)).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Depth of field, then foveation. Disabled stages are the identity.
pub fn apply_retinal_pipeline(
    frame: &RetinalFrame,
    aperture: &ApertureConfig,
    foveation: &FoveationConfig,
) -> Result<RetinalFrame> {
    let optics = apply_depth_of_field(frame, aperture)?;
    apply_foveation(&optics, foveation)
}
