//! Coarse-to-fine direct estimation of DCT-parameterized global motion
//! between frame pairs.
//!
//! Each pyramid level minimizes the robust photometric objective
//! `sum_p R(|b(p) - a(p + f(p))|)` over the level's cutoff-truncated
//! coefficients by damped Gauss-Newton with IRLS weights, initialized from
//! the previous (coarser) level. The cutoff grows level by level up to the
//! schedule's final entry, so large motion is locked in by low frequencies
//! before finer structure is allowed to move.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::affine::subgrid_indices;
use crate::dct::{self, DctCoeffs, GridSpec};
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence};
use crate::robust::{barron_loss, barron_weight, RobustLossParams};
use crate::sep::SepBasis;

/// Coarse-to-fine schedule for the estimator. `cutoff_schedule` is ordered
/// coarsest level first and must be non-decreasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidSpec {
    pub levels: usize,
    pub downscale: usize,
    pub cutoff_schedule: Vec<usize>,
    pub max_gn_iters: usize,
    /// Fitting-lattice size of the coefficient basis (square).
    pub grid_n: usize,
}

impl PyramidSpec {
    pub fn new(cutoff_schedule: Vec<usize>, max_gn_iters: usize) -> Result<Self> {
        if cutoff_schedule.is_empty() {
            return Err(Error::InvalidParameter("cutoff schedule must not be empty".into()));
        }
        if cutoff_schedule.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "cutoff schedule must be non-decreasing".into(),
            ));
        }
        if *cutoff_schedule.last().unwrap() > 8 {
            return Err(Error::InvalidParameter("final cutoff must be at most 8".into()));
        }
        Ok(PyramidSpec {
            levels: cutoff_schedule.len(),
            downscale: 2,
            cutoff_schedule,
            max_gn_iters,
            grid_n: 64,
        })
    }

    /// Standard 4-level schedule [2, 4, 6, 8], shortened for small frames.
    pub fn default_for(h: usize, w: usize) -> Self {
        let mut levels = 1;
        while levels < 4 && h.min(w) >= 16 << levels {
            levels += 1;
        }
        let full = [2usize, 4, 6, 8];
        PyramidSpec::new(full[4 - levels..].to_vec(), 20).unwrap()
    }

    /// Same schedule with a lower final cutoff.
    pub fn with_final_cutoff(&self, cutoff: usize) -> Result<Self> {
        let schedule: Vec<usize> = self
            .cutoff_schedule
            .iter()
            .map(|&c| c.min(cutoff))
            .collect();
        let mut spec = PyramidSpec::new(schedule, self.max_gn_iters)?;
        spec.grid_n = self.grid_n;
        Ok(spec)
    }

    fn min_dims(&self) -> usize {
        16 << (self.levels - 1)
    }
}

/// Downsampling pyramid of a frame, coarsest level first. Each finer level
/// doubles resolution; downsampling applies a 2-tap box prefilter (2x2 block
/// average, edge-clamped for odd sizes).
pub fn build_pyramid(frame: &Frame, spec: &PyramidSpec) -> Result<Vec<Frame>> {
    let need = spec.min_dims();
    if frame.width.min(frame.height) < need {
        return Err(Error::FrameTooSmall {
            w: frame.width,
            h: frame.height,
            min_w: need,
            min_h: need,
            levels: spec.levels,
        });
    }
    let mut levels = vec![frame.clone()];
    for _ in 1..spec.levels {
        let prev = levels.last().unwrap();
        levels.push(downsample2(prev));
    }
    levels.reverse();
    Ok(levels)
}

fn downsample2(f: &Frame) -> Frame {
    let nw = (f.width + 1) / 2;
    let nh = (f.height + 1) / 2;
    Frame::from_fn(nw, nh, |x, y| {
        let x0 = 2 * x;
        let y0 = 2 * y;
        let x1 = (x0 + 1).min(f.width - 1);
        let y1 = (y0 + 1).min(f.height - 1);
        0.25 * (f.at(x0, y0) + f.at(x1, y0) + f.at(x0, y1) + f.at(x1, y1))
    })
}

/// Per-level data: 1 px Gaussian-smoothed image and its gradients. Both the
/// residual and the Jacobian are evaluated on the smoothed images.
struct LevelData {
    w: usize,
    h: usize,
    smooth: Frame,
    gx: Frame,
    gy: Frame,
}

/// A frame with all per-level derived images precomputed.
pub struct PreparedFrame {
    levels: Vec<LevelData>,
}

impl PreparedFrame {
    pub fn new(frame: &Frame, spec: &PyramidSpec) -> Result<Self> {
        let levels = build_pyramid(frame, spec)?
            .into_iter()
            .map(|raw| {
                let smooth = raw.gaussian1();
                let (gx, gy) = smooth.gradients();
                LevelData {
                    w: raw.width,
                    h: raw.height,
                    smooth,
                    gx,
                    gy,
                }
            })
            .collect();
        Ok(PreparedFrame { levels })
    }
}

/// Result of one pair estimation.
#[derive(Debug, Clone)]
pub struct PairEstimate {
    pub coeffs: DctCoeffs,
    /// Set when some level hit three consecutive rejected damped steps; the
    /// coefficients are the last stable iterate.
    pub diverged: bool,
    /// Mean robust photometric loss over valid samples at the finest level.
    pub final_objective: f64,
}

/// Estimates global motion from `frame_a` to `frame_b`: warping `frame_a`
/// by the rendered coefficients approximates `frame_b`.
pub fn estimate_pair(
    frame_a: &Frame,
    frame_b: &Frame,
    spec: &PyramidSpec,
    loss: &RobustLossParams,
) -> Result<PairEstimate> {
    if frame_a.width != frame_b.width || frame_a.height != frame_b.height {
        return Err(Error::DimensionMismatch {
            index: 1,
            want_w: frame_a.width,
            want_h: frame_a.height,
            got_w: frame_b.width,
            got_h: frame_b.height,
        });
    }
    let pa = PreparedFrame::new(frame_a, spec)?;
    let pb = PreparedFrame::new(frame_b, spec)?;
    estimate_prepared(&pa, &pb, spec, loss, None)
}

/// Pair estimation between prepared frames, optionally warm-started from
/// coefficients in finest-level pixel units.
pub(crate) fn estimate_prepared(
    a: &PreparedFrame,
    b: &PreparedFrame,
    spec: &PyramidSpec,
    loss: &RobustLossParams,
    init: Option<&DctCoeffs>,
) -> Result<PairEstimate> {
    let n_levels = spec.levels;
    let full = &a.levels[n_levels - 1];
    let grid = GridSpec::new(
        spec.grid_n.min(full.h),
        spec.grid_n.min(full.w),
        full.h,
        full.w,
    )?;

    // Initial coefficients at the coarsest level, in that level's pixel
    // units.
    let coarse_cut = spec.cutoff_schedule[0];
    let mut theta = match init {
        Some(c) => {
            let mut t = dct::truncate(c, coarse_cut)?;
            t.scale(1.0 / (1 << (n_levels - 1)) as f64);
            t
        }
        None => DctCoeffs::zeros(coarse_cut, grid)?,
    };

    let mut diverged = false;
    let mut final_obj = 0.0;
    for (li, cutoff) in spec.cutoff_schedule.iter().copied().enumerate() {
        if li > 0 {
            theta = dct::truncate(&theta, cutoff)?;
            theta.scale(spec.downscale as f64);
        }
        let la = &a.levels[li];
        let lb = &b.levels[li];
        let out = refine_level(la, lb, &mut theta, spec, loss, grid)?;
        diverged |= out.0;
        final_obj = out.1;
    }
    Ok(PairEstimate {
        coeffs: theta,
        diverged,
        final_objective: final_obj,
    })
}

/// Fetches smoothed intensity and both gradients at one continuous position
/// with a single bounds check and shared bilinear weights.
#[inline]
fn fetch3(l: &LevelData, x: f64, y: f64) -> Option<(f64, f64, f64)> {
    let (w, h) = (l.w, l.h);
    if !(x >= 0.0 && x <= (w - 1) as f64 && y >= 0.0 && y <= (h - 1) as f64) {
        return None;
    }
    let x0 = (x as usize).min(w - 2);
    let y0 = (y as usize).min(h - 2);
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let i = y0 * w + x0;
    let w00 = (1.0 - fy) * (1.0 - fx);
    let w01 = (1.0 - fy) * fx;
    let w10 = fy * (1.0 - fx);
    let w11 = fy * fx;
    let pick = |d: &[f32]| -> f64 {
        (w00 * d[i] + w01 * d[i + 1] + w10 * d[i + w] + w11 * d[i + w + 1]) as f64
    };
    Some((pick(&l.smooth.data), pick(&l.gx.data), pick(&l.gy.data)))
}

const LM_LAMBDA_INIT: f64 = 1e-3;
const LM_LAMBDA_MIN: f64 = 1e-7;
const LM_LAMBDA_MAX: f64 = 1e8;
const GN_STEP_TOL: f64 = 0.02;
const MAX_CONSECUTIVE_REJECTS: usize = 3;
/// Sample lattice size per axis at each level.
const SAMPLES_PER_AXIS: usize = 64;

/// Damped Gauss-Newton refinement of `theta` (in this level's pixel units)
/// at one pyramid level. Returns (diverged, mean objective).
fn refine_level(
    a: &LevelData,
    b: &LevelData,
    theta: &mut DctCoeffs,
    spec: &PyramidSpec,
    loss: &RobustLossParams,
    grid: GridSpec,
) -> Result<(bool, f64)> {
    let cutoff = theta.cutoff();
    let f = cutoff + 1;
    let m = f * f;
    let ys = subgrid_indices(a.h, SAMPLES_PER_AXIS);
    let xs = subgrid_indices(a.w, SAMPLES_PER_AXIS);
    let (ny, nx) = (ys.len(), xs.len());
    let n = ny * nx;

    let posy: Vec<f64> = ys
        .iter()
        .map(|&y| (y as f64 + 0.5) / a.h as f64 * grid.grid_h as f64 - 0.5)
        .collect();
    let posx: Vec<f64> = xs
        .iter()
        .map(|&x| (x as f64 + 0.5) / a.w as f64 * grid.grid_w as f64 - 0.5)
        .collect();
    let by = dct::basis_matrix(grid.grid_h, f, &posy);
    let bx = dct::basis_matrix(grid.grid_w, f, &posx);
    let sep = SepBasis::new(by, bx);

    // Per-sample scratch.
    let mut resid = vec![0.0f64; n];
    let mut gxs = vec![0.0f64; n];
    let mut gys = vec![0.0f64; n];
    let mut wgt = vec![0.0f64; n];

    // Evaluates residuals/gradients at `cx, cy`; returns (mean objective,
    // valid count).
    let evaluate = |cx: &DVector<f64>,
                    cy: &DVector<f64>,
                    resid: &mut [f64],
                    gxs: &mut [f64],
                    gys: &mut [f64],
                    wgt: &mut [f64]|
     -> (f64, usize) {
        let as_mat = |c: &DVector<f64>| DMatrix::from_fn(f, f, |u, v| c[u * f + v]);
        let fu = sep.render(&as_mat(cx));
        let fv = sep.render(&as_mat(cy));
        let mut obj = 0.0;
        let mut valid = 0usize;
        for (yi, &y) in ys.iter().enumerate() {
            for (xi, &x) in xs.iter().enumerate() {
                let k = yi * nx + xi;
                let sx = x as f64 + fu[k];
                let sy = y as f64 + fv[k];
                match fetch3(a, sx, sy) {
                    Some((av, gx, gy)) => {
                        let r = av - b.smooth.at(x, y) as f64;
                        resid[k] = r;
                        gxs[k] = gx;
                        gys[k] = gy;
                        wgt[k] = barron_weight(r.abs(), loss);
                        obj += barron_loss(r.abs(), loss);
                        valid += 1;
                    }
                    None => {
                        wgt[k] = 0.0;
                        resid[k] = 0.0;
                        gxs[k] = 0.0;
                        gys[k] = 0.0;
                    }
                }
            }
        }
        (if valid > 0 { obj / valid as f64 } else { f64::INFINITY }, valid)
    };

    let vec_of = |c: &DctCoeffs, vertical: bool| -> DVector<f64> {
        DVector::from_fn(m, |i, _| {
            let (u, v) = (i / f, i % f);
            if vertical {
                c.y(u, v)
            } else {
                c.x(u, v)
            }
        })
    };
    let mut cx = vec_of(theta, false);
    let mut cy = vec_of(theta, true);

    let (mut obj, valid) = evaluate(&cx, &cy, &mut resid, &mut gxs, &mut gys, &mut wgt);
    if valid < (4 * 2 * m).min(n / 2).max(16) {
        // Warp pushes most samples off-frame; refuse to update at this level.
        return Ok((true, obj));
    }

    let mut lambda = LM_LAMBDA_INIT;
    let mut rejects = 0usize;
    let mut diverged = false;

    for _ in 0..spec.max_gn_iters {
        // Weighted Gauss-Newton system from the current evaluation.
        let s1: Vec<f64> = (0..n).map(|k| wgt[k] * gxs[k] * gxs[k]).collect();
        let s2: Vec<f64> = (0..n).map(|k| wgt[k] * gxs[k] * gys[k]).collect();
        let s3: Vec<f64> = (0..n).map(|k| wgt[k] * gys[k] * gys[k]).collect();
        let h_xx = sep.weighted_gram(&s1);
        let h_xy = sep.weighted_gram(&s2);
        let h_yy = sep.weighted_gram(&s3);
        let r1: Vec<f64> = (0..n).map(|k| wgt[k] * resid[k] * gxs[k]).collect();
        let r2: Vec<f64> = (0..n).map(|k| wgt[k] * resid[k] * gys[k]).collect();
        let g_x = sep.weighted_rhs(&r1);
        let g_y = sep.weighted_rhs(&r2);

        let mut h = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                h[(i, j)] = h_xx[(i, j)];
                h[(i, j + m)] = h_xy[(i, j)];
                h[(i + m, j)] = h_xy[(j, i)];
                h[(i + m, j + m)] = h_yy[(i, j)];
            }
        }
        let mut g = DVector::<f64>::zeros(2 * m);
        for i in 0..m {
            g[i] = g_x[i];
            g[i + m] = g_y[i];
        }

        let mut accepted = false;
        while rejects < MAX_CONSECUTIVE_REJECTS {
            let mut hd = h.clone();
            let trace = (0..2 * m).map(|i| h[(i, i)]).sum::<f64>() / (2 * m) as f64;
            for i in 0..2 * m {
                hd[(i, i)] += lambda * h[(i, i)] + 1e-12 * trace.max(1e-300);
            }
            let delta = match hd.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => break,
            };
            let tx = &cx + delta.rows(0, m);
            let ty = &cy + delta.rows(m, m);
            let mut t_res = vec![0.0; n];
            let mut t_gx = vec![0.0; n];
            let mut t_gy = vec![0.0; n];
            let mut t_w = vec![0.0; n];
            let (t_obj, t_valid) =
                evaluate(&tx.clone_owned(), &ty.clone_owned(), &mut t_res, &mut t_gx, &mut t_gy, &mut t_w);
            if t_valid >= 16 && t_obj <= obj {
                cx = tx.clone_owned();
                cy = ty.clone_owned();
                resid = t_res;
                gxs = t_gx;
                gys = t_gy;
                wgt = t_w;
                let step = delta.amax();
                obj = t_obj;
                lambda = (lambda / 3.0).max(LM_LAMBDA_MIN);
                rejects = 0;
                accepted = true;
                if step < GN_STEP_TOL {
                    // Converged at this level.
                    write_back(theta, &cx, &cy, f);
                    return Ok((diverged, obj));
                }
                break;
            } else {
                lambda = (lambda * 10.0).min(LM_LAMBDA_MAX);
                rejects += 1;
            }
        }
        if !accepted {
            diverged = true;
            break;
        }
    }
    write_back(theta, &cx, &cy, f);
    Ok((diverged, obj))
}

fn write_back(theta: &mut DctCoeffs, cx: &DVector<f64>, cy: &DVector<f64>, f: usize) {
    for u in 0..f {
        for v in 0..f {
            theta.set_x(u, v, cx[u * f + v]);
            theta.set_y(u, v, cy[u * f + v]);
        }
    }
}

/// Window estimation result: coefficients for every reachable neighbor.
#[derive(Debug, Clone)]
pub struct WindowEstimate {
    pub center: usize,
    pub thetas: BTreeMap<usize, DctCoeffs>,
    /// Neighbors whose estimate ended on a diverged iterate.
    pub diverged: Vec<usize>,
    /// Neighbors dropped because estimation failed outright.
    pub failed: Vec<usize>,
}

/// Estimates motion from the center frame to every frame in the clipped
/// window `[center - radius, center + radius]`. The self-entry is exactly
/// zero. Estimates walk outward from the center, each warm-started from its
/// inner neighbor.
pub fn estimate_window(
    frames: &FrameSequence,
    center: usize,
    radius: usize,
    spec: &PyramidSpec,
    loss: &RobustLossParams,
) -> Result<WindowEstimate> {
    if center >= frames.len() {
        return Err(Error::InvalidParameter(format!(
            "window center {center} outside video of {} frames",
            frames.len()
        )));
    }
    let lo = center.saturating_sub(radius);
    let hi = (center + radius).min(frames.len() - 1);
    let mut prepared: BTreeMap<usize, PreparedFrame> = BTreeMap::new();
    for j in lo..=hi {
        prepared.insert(j, PreparedFrame::new(&frames.frames[j], spec)?);
    }
    estimate_window_prepared(&prepared, center, radius, spec, loss)
}

/// Window estimation over pre-built pyramids (shared across centers by the
/// sequence smoother).
pub(crate) fn estimate_window_prepared(
    prepared: &BTreeMap<usize, PreparedFrame>,
    center: usize,
    radius: usize,
    spec: &PyramidSpec,
    loss: &RobustLossParams,
) -> Result<WindowEstimate> {
    let pc = prepared
        .get(&center)
        .ok_or_else(|| Error::InvalidParameter("center frame not prepared".into()))?;
    let full = &pc.levels[spec.levels - 1];
    let grid = GridSpec::new(
        spec.grid_n.min(full.h),
        spec.grid_n.min(full.w),
        full.h,
        full.w,
    )?;
    let final_cutoff = *spec.cutoff_schedule.last().unwrap();

    let mut out = WindowEstimate {
        center,
        thetas: BTreeMap::new(),
        diverged: Vec::new(),
        failed: Vec::new(),
    };
    out.thetas.insert(center, DctCoeffs::zeros(final_cutoff, grid)?);

    for dir in [1isize, -1isize] {
        let mut warm: Option<DctCoeffs> = None;
        for step in 1..=radius as isize {
            let j = center as isize + dir * step;
            if j < 0 {
                break;
            }
            let j = j as usize;
            let Some(pj) = prepared.get(&j) else { break };
            match estimate_prepared(pc, pj, spec, loss, warm.as_ref()) {
                Ok(est) => {
                    if est.diverged {
                        out.diverged.push(j);
                    }
                    warm = Some(est.coeffs.clone());
                    out.thetas.insert(j, est.coeffs);
                }
                Err(_) => {
                    out.failed.push(j);
                    warm = None;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine;
    use crate::synth;

    fn default_loss() -> RobustLossParams {
        RobustLossParams::photometric_default()
    }

    #[test]
    fn pyramid_sizes_double() {
        let spec = PyramidSpec::default_for(256, 256);
        assert_eq!(spec.levels, 4);
        let f = Frame::new(256, 256);
        let pyr = build_pyramid(&f, &spec).unwrap();
        let dims: Vec<(usize, usize)> = pyr.iter().map(|l| (l.width, l.height)).collect();
        assert_eq!(dims, vec![(32, 32), (64, 64), (128, 128), (256, 256)]);
    }

    #[test]
    fn pyramid_constant_image_stays_constant() {
        let f = Frame::from_fn(64, 64, |_, _| 0.42);
        let spec = PyramidSpec::default_for(64, 64);
        for level in build_pyramid(&f, &spec).unwrap() {
            assert!(level.data.iter().all(|&v| (v - 0.42).abs() < 1e-6));
        }
    }

    #[test]
    fn pyramid_rejects_small_frames() {
        let spec = PyramidSpec::new(vec![2, 4, 6, 8], 20).unwrap();
        let err = build_pyramid(&Frame::new(100, 100), &spec).unwrap_err();
        assert!(matches!(err, Error::FrameTooSmall { .. }));
    }

    #[test]
    fn pyramid_prefilter_does_not_amplify_energy() {
        // Box prefilter + decimation cannot increase mean-square level
        // energy (Jensen), checked on a noise image.
        let tex = synth::Texture::new(99, 128.0, 128.0, 3);
        let f = Frame::from_fn(128, 128, |x, y| tex.at(x as f64, y as f64) as f32);
        let spec = PyramidSpec::default_for(128, 128);
        let pyr = build_pyramid(&f, &spec).unwrap();
        for k in 0..pyr.len() - 1 {
            assert!(pyr[k].mean_square() <= pyr[k + 1].mean_square() + 1e-9);
        }
    }

    #[test]
    fn identical_frames_give_zero_motion() {
        let scene = synth::SceneSpec::new(128, 96, 1, 21);
        let (seq, _) = synth::generate(&scene, &synth::static_path(1)).unwrap();
        let spec = PyramidSpec::default_for(96, 128);
        let est = estimate_pair(&seq.frames[0], &seq.frames[0], &spec, &default_loss()).unwrap();
        assert!(est.coeffs.max_abs() < 1e-6, "max coeff {}", est.coeffs.max_abs());
        assert!(!est.diverged);
    }

    #[test]
    fn pure_translation_is_recovered_subpixel() {
        let scene = synth::SceneSpec::new(160, 128, 2, 31);
        let (seq, truth) = synth::generate(&scene, &synth::translation_path(2, 4.5, -3.25)).unwrap();
        let spec = PyramidSpec::default_for(128, 160);
        let est = estimate_pair(&seq.frames[0], &seq.frames[1], &spec, &default_loss()).unwrap();
        let (tx, ty) = est.coeffs.mean_translation();
        let gt = truth.pair_params[0];
        assert!((tx - gt.t_x).abs() < 0.25, "tx {tx} vs {}", gt.t_x);
        assert!((ty - gt.t_y).abs() < 0.25, "ty {ty} vs {}", gt.t_y);
    }

    #[test]
    fn rotation_is_recovered() {
        let scene = synth::SceneSpec::new(160, 160, 2, 37);
        let mut path = synth::static_path(2);
        path.poses[1] = affine::SimilarityParams::new(0.02, 0.0, 0.0, 0.0);
        let (seq, truth) = synth::generate(&scene, &path).unwrap();
        let spec = PyramidSpec::default_for(160, 160);
        let est = estimate_pair(&seq.frames[0], &seq.frames[1], &spec, &default_loss()).unwrap();
        let flow = dct::evaluate(&est.coeffs, 160, 160);
        let fitted = affine::fit_similarity(&flow, &RobustLossParams::flow_default()).unwrap();
        let gt = truth.pair_params[0];
        assert!((fitted.r - gt.r).abs() < 5e-3, "r {} vs {}", fitted.r, gt.r);
    }

    #[test]
    fn translation_antisymmetry() {
        let scene = synth::SceneSpec::new(128, 128, 2, 41);
        let (seq, _) = synth::generate(&scene, &synth::translation_path(2, 3.0, 2.0)).unwrap();
        let spec = PyramidSpec::default_for(128, 128);
        let ab = estimate_pair(&seq.frames[0], &seq.frames[1], &spec, &default_loss()).unwrap();
        let ba = estimate_pair(&seq.frames[1], &seq.frames[0], &spec, &default_loss()).unwrap();
        let (fx, fy) = ab.coeffs.mean_translation();
        let (bx, by) = ba.coeffs.mean_translation();
        assert!((fx + bx).abs() < 0.3, "{fx} vs {bx}");
        assert!((fy + by).abs() < 0.3, "{fy} vs {by}");
    }

    #[test]
    fn cutoff_containment() {
        let scene = synth::SceneSpec::new(128, 128, 2, 43);
        let (seq, _) = synth::generate(&scene, &synth::translation_path(2, 2.0, 1.0)).unwrap();
        let spec = PyramidSpec::new(vec![2, 4], 20).unwrap();
        let est = estimate_pair(&seq.frames[0], &seq.frames[1], &spec, &default_loss()).unwrap();
        assert_eq!(est.coeffs.cutoff(), 4);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = Frame::new(64, 64);
        let b = Frame::new(64, 48);
        let spec = PyramidSpec::default_for(64, 64);
        let err = estimate_pair(&a, &b, &spec, &default_loss()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn window_radius_zero_is_self_only() {
        let scene = synth::SceneSpec::new(64, 64, 3, 47);
        let (seq, _) = synth::generate(&scene, &synth::static_path(3)).unwrap();
        let spec = PyramidSpec::default_for(64, 64);
        let win = estimate_window(&seq, 1, 0, &spec, &default_loss()).unwrap();
        assert_eq!(win.thetas.len(), 1);
        assert!(win.thetas[&1].max_abs() == 0.0);
    }

    #[test]
    fn window_on_static_video_is_all_zero() {
        let scene = synth::SceneSpec::new(96, 64, 5, 53);
        let (seq, _) = synth::generate(&scene, &synth::static_path(5)).unwrap();
        let spec = PyramidSpec::default_for(64, 96);
        let win = estimate_window(&seq, 2, 2, &spec, &default_loss()).unwrap();
        assert_eq!(win.thetas.len(), 5);
        for (_, theta) in &win.thetas {
            assert!(theta.max_abs() < 1e-6);
        }
    }

    #[test]
    fn window_on_constant_velocity_video_is_linear() {
        let scene = synth::SceneSpec::new(128, 96, 7, 59);
        let (seq, _) = synth::generate(&scene, &synth::translation_path(7, 1.0, 0.5)).unwrap();
        let spec = PyramidSpec::default_for(96, 128);
        let win = estimate_window(&seq, 3, 3, &spec, &default_loss()).unwrap();
        for (&j, theta) in &win.thetas {
            let (tx, ty) = theta.mean_translation();
            let d = j as f64 - 3.0;
            assert!((tx - d).abs() < 0.3, "j={j}: tx {tx} vs {d}");
            assert!((ty - 0.5 * d).abs() < 0.3, "j={j}: ty {ty} vs {}", 0.5 * d);
        }
    }
}
