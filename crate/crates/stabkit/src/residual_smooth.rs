//! Stage 2: temporal bilateral smoothing of DCT coefficient sequences over
//! sliding windows.
//!
//! For each frame `i`, motion is estimated separately to every neighbor in
//! the clipped window `[i - W_R, i + W_R]` (coefficient blocks cannot be
//! composed the way affine parameters can), and the smoothed block is the
//! bilateral average: temporal closeness times photometric agreement of the
//! warped center frame with each neighbor. The zero-frequency coefficients
//! are exempted by default; translation smoothing is Stage 1's job.

use std::collections::BTreeMap;

use crate::align::{self, PreparedFrame, PyramidSpec};
use crate::dct::{self, DctCoeffs};
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence};
use crate::robust::RobustLossParams;
use crate::warp::{self, CropWindow};

/// Bilateral window configuration. `sigma_t` defaults to `W_R / 3` and
/// `sigma_p` to 0.1 (intensities in [0, 1]).
#[derive(Debug, Clone, Copy)]
pub struct BilateralConfig {
    pub window_radius: usize,
    pub sigma_t: f64,
    pub sigma_p: f64,
    pub skip_dc: bool,
}

impl BilateralConfig {
    pub fn new(window_radius: usize) -> Self {
        BilateralConfig {
            window_radius,
            sigma_t: (window_radius as f64 / 3.0).max(1.0 / 3.0),
            sigma_p: 0.1,
            skip_dc: true,
        }
    }
}

/// Smoothed coefficients plus the bilateral weights that produced them.
#[derive(Debug, Clone)]
pub struct BilateralResult {
    pub coeffs: DctCoeffs,
    pub weights: BTreeMap<usize, f64>,
}

/// Bilateral average of a window of coefficient blocks around `center`.
/// `small_frames` are the video frames at the coefficient grid resolution
/// (luma); the photometric kernel compares the warped center frame against
/// each neighbor there, which is resolution-normalized by construction.
pub(crate) fn bilateral_center_small(
    thetas: &BTreeMap<usize, DctCoeffs>,
    small_frames: &[Frame],
    full_w: usize,
    full_h: usize,
    center: usize,
    config: &BilateralConfig,
) -> Result<BilateralResult> {
    let self_theta = thetas
        .get(&center)
        .ok_or(Error::EmptyWindow)?;
    let small_c = &small_frames[center];
    let (gw, gh) = (small_c.width, small_c.height);
    let sx = gw as f64 / full_w as f64;
    let sy = gh as f64 / full_h as f64;

    let mut weights = BTreeMap::new();
    let mut acc = DctCoeffs::zeros(self_theta.cutoff(), self_theta.grid())?;
    let mut wsum = 0.0;
    for (&j, theta) in thetas {
        let dt = center as f64 - j as f64;
        let w_t = (-dt * dt / (2.0 * config.sigma_t * config.sigma_t)).exp();
        let w_p = if j == center {
            1.0
        } else {
            // Warp the center frame toward frame j at grid resolution.
            let flow = dct::evaluate(theta, gh, gw);
            let mut ssd = 0.0f64;
            let mut n_valid = 0usize;
            let small_j = &small_frames[j];
            for y in 0..gh {
                for x in 0..gw {
                    let i = y * gw + x;
                    let px = x as f64 + flow.u[i] * sx;
                    let py = y as f64 + flow.v[i] * sy;
                    if let Some(v) = small_c.sample(px, py) {
                        let d = (v - small_j.at(x, y)) as f64;
                        ssd += d * d;
                        n_valid += 1;
                    }
                }
            }
            if n_valid == 0 {
                0.0
            } else {
                (-ssd / (2.0 * n_valid as f64 * config.sigma_p * config.sigma_p)).exp()
            }
        };
        let w = w_t * w_p;
        if w > 0.0 {
            acc.axpy(w, theta);
            wsum += w;
        }
        weights.insert(j, w);
    }
    // The self-entry contributes weight exactly 1, so wsum >= 1.
    acc.scale(1.0 / wsum);
    if config.skip_dc {
        acc.set_x(0, 0, self_theta.x(0, 0));
        acc.set_y(0, 0, self_theta.y(0, 0));
    }
    Ok(BilateralResult {
        coeffs: acc,
        weights,
    })
}

/// Bilateral smoothing of one window against full-resolution frames.
pub fn bilateral_smooth_center(
    thetas: &BTreeMap<usize, DctCoeffs>,
    frames: &FrameSequence,
    center: usize,
    config: &BilateralConfig,
) -> Result<BilateralResult> {
    if thetas.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let theta0 = thetas.values().next().unwrap();
    let grid = theta0.grid();
    let small: Vec<Frame> = frames
        .frames
        .iter()
        .map(|f| f.resize(grid.grid_w, grid.grid_h))
        .collect();
    bilateral_center_small(thetas, &small, frames.width(), frames.height(), center, config)
}

/// Estimates window motion and bilateral-smooths the coefficient sequence
/// for every frame. Returns one smoothed block per frame.
pub fn smooth_sequence(
    frames: &FrameSequence,
    spec: &PyramidSpec,
    loss: &RobustLossParams,
    config: &BilateralConfig,
) -> Result<Vec<DctCoeffs>> {
    if frames.len() < 2 {
        return Err(Error::VideoTooShort {
            got: frames.len(),
            need: 2,
        });
    }
    let t = frames.len();
    let prepared: BTreeMap<usize, PreparedFrame> = frames
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| Ok((i, PreparedFrame::new(f, spec)?)))
        .collect::<Result<_>>()?;
    // Grid-resolution luma cache for the photometric kernel.
    let grid_n = spec.grid_n;
    let small: Vec<Frame> = frames
        .frames
        .iter()
        .map(|f| f.resize(grid_n.min(f.width), grid_n.min(f.height)))
        .collect();

    let mut out = Vec::with_capacity(t);
    for i in 0..t {
        let window =
            align::estimate_window_prepared(&prepared, i, config.window_radius, spec, loss)?;
        let res = bilateral_center_small(
            &window.thetas,
            &small,
            frames.width(),
            frames.height(),
            i,
            config,
        )?;
        out.push(res.coeffs);
    }
    Ok(out)
}

/// Warps every frame by its smoothed coefficients and applies the uniform
/// aspect-preserving crop.
pub fn apply_residual(
    frames: &FrameSequence,
    thetas: &[DctCoeffs],
) -> Result<(FrameSequence, CropWindow)> {
    if thetas.len() != frames.len() {
        return Err(Error::InvalidParameter(format!(
            "{} coefficient blocks for {} frames",
            thetas.len(),
            frames.len()
        )));
    }
    let (w, h) = (frames.width(), frames.height());
    let mut warped = Vec::with_capacity(frames.len());
    let mut masks = Vec::with_capacity(frames.len());
    for (frame, theta) in frames.frames.iter().zip(thetas) {
        let flow = dct::evaluate(theta, h, w);
        let (f, m) = warp::warp_by_flow(frame, &flow);
        warped.push(f);
        masks.push(m);
    }
    let seq = FrameSequence::with_masks(warped, masks);
    warp::uniform_crop(&seq)
}
