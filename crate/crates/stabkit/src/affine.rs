//! Four-parameter similarity (partial affine) transforms and their
//! extraction from global flow fields.
//!
//! A `SimilarityParams` describes the center-anchored map
//! `p -> e^s * Rot(r) * (p - p_c) + p_c + t`, so translation is decoupled
//! from rotation and scale to first order. Rotation/log-scale compose
//! additively; translation composes through the linear part.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::FlowField;
use crate::robust::{barron_weight, RobustLossParams};

/// Rotation (radians), log-scale, and translation (pixels) of a similarity
/// transform anchored at the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub r: f64,
    pub s: f64,
    pub t_x: f64,
    pub t_y: f64,
}

impl SimilarityParams {
    pub const IDENTITY: SimilarityParams = SimilarityParams {
        r: 0.0,
        s: 0.0,
        t_x: 0.0,
        t_y: 0.0,
    };

    pub fn new(r: f64, s: f64, t_x: f64, t_y: f64) -> Self {
        SimilarityParams { r, s, t_x, t_y }
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.s.is_finite() && self.t_x.is_finite() && self.t_y.is_finite()
    }

    /// Parameter by index, ordered `(r, s, t_x, t_y)`.
    pub fn get(&self, k: usize) -> f64 {
        match k {
            0 => self.r,
            1 => self.s,
            2 => self.t_x,
            3 => self.t_y,
            _ => panic!("similarity parameter index {k} out of range"),
        }
    }

    pub fn set(&mut self, k: usize, v: f64) {
        match k {
            0 => self.r = v,
            1 => self.s = v,
            2 => self.t_x = v,
            3 => self.t_y = v,
            _ => panic!("similarity parameter index {k} out of range"),
        }
    }

    /// Applies the center-anchored map to a point.
    pub fn apply(&self, x: f64, y: f64, cx: f64, cy: f64) -> (f64, f64) {
        let es = self.s.exp();
        let (sin, cos) = self.r.sin_cos();
        let dx = x - cx;
        let dy = y - cy;
        (
            es * (cos * dx - sin * dy) + cx + self.t_x,
            es * (sin * dx + cos * dy) + cy + self.t_y,
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.r.abs().max(self.s.abs()).max(self.t_x.abs()).max(self.t_y.abs())
    }
}

/// Composition "apply `a`, then `b`": rotation and log-scale add, the
/// translation of `a` passes through `b`'s linear part.
pub fn compose(a: &SimilarityParams, b: &SimilarityParams) -> SimilarityParams {
    let es = b.s.exp();
    let (sin, cos) = b.r.sin_cos();
    SimilarityParams {
        r: a.r + b.r,
        s: a.s + b.s,
        t_x: es * (cos * a.t_x - sin * a.t_y) + b.t_x,
        t_y: es * (sin * a.t_x + cos * a.t_y) + b.t_y,
    }
}

/// Exact inverse map.
pub fn invert(a: &SimilarityParams) -> SimilarityParams {
    let es = (-a.s).exp();
    let (sin, cos) = (-a.r).sin_cos();
    SimilarityParams {
        r: -a.r,
        s: -a.s,
        t_x: -es * (cos * a.t_x - sin * a.t_y),
        t_y: -es * (sin * a.t_x + cos * a.t_y),
    }
}

/// Renders the displacement field of a similarity map:
/// `f(p) = apply(p) - p` at every pixel.
pub fn flow_from_similarity(params: &SimilarityParams, h: usize, w: usize) -> FlowField {
    assert!(h > 0 && w > 0);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    FlowField::from_fn(w, h, |x, y| {
        let (nx, ny) = params.apply(x as f64, y as f64, cx, cy);
        (nx - x as f64, ny - y as f64)
    })
}

const FIT_SUBGRID: usize = 32;
const FIT_MAX_ITERS: usize = 20;
const FIT_PARAM_TOL: f64 = 1e-8;

/// Evenly spread sample indices along one axis (all indices when the axis is
/// short).
pub(crate) fn subgrid_indices(dim: usize, n: usize) -> Vec<usize> {
    if dim <= n {
        return (0..dim).collect();
    }
    let mut idx: Vec<usize> = (0..n)
        .map(|k| {
            (((k as f64 + 0.5) * dim as f64 / n as f64 - 0.5).round()).clamp(0.0, dim as f64 - 1.0)
                as usize
        })
        .collect();
    idx.dedup();
    idx
}

/// One flow correspondence: source point and its displaced target.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Correspondence {
    pub x: f64,
    pub y: f64,
    pub tx: f64,
    pub ty: f64,
}

/// Robust similarity fit to correspondences via weighted Procrustes inside
/// an IRLS loop.
pub(crate) fn fit_similarity_points(
    pts: &[Correspondence],
    cx: f64,
    cy: f64,
    loss: &RobustLossParams,
) -> Result<SimilarityParams> {
    if pts.len() < 4 {
        return Err(Error::Degenerate(format!(
            "similarity fit needs at least 4 samples, got {}",
            pts.len()
        )));
    }
    let mut weights = vec![1.0f64; pts.len()];
    let mut fit = SimilarityParams::IDENTITY;
    for _ in 0..FIT_MAX_ITERS {
        let next = procrustes(pts, &weights, cx, cy)?;
        // Update weights from residuals of the new fit.
        for (i, p) in pts.iter().enumerate() {
            let (mx, my) = next.apply(p.x, p.y, cx, cy);
            let r = ((p.tx - mx).powi(2) + (p.ty - my).powi(2)).sqrt();
            weights[i] = barron_weight(r, loss);
        }
        let delta = (next.r - fit.r)
            .abs()
            .max((next.s - fit.s).abs())
            .max((next.t_x - fit.t_x).abs())
            .max((next.t_y - fit.t_y).abs());
        fit = next;
        if delta < FIT_PARAM_TOL {
            break;
        }
    }
    if !(fit.is_finite() && fit.s.abs() < 2.0) {
        return Err(Error::Degenerate(format!(
            "similarity fit out of range: r={} s={} t=({}, {})",
            fit.r, fit.s, fit.t_x, fit.t_y
        )));
    }
    Ok(fit)
}

/// Closed-form weighted similarity Procrustes for correspondences `(p, q)`,
/// solved about the weighted centroids and re-anchored at the image center.
fn procrustes(pts: &[Correspondence], w: &[f64], cx: f64, cy: f64) -> Result<SimilarityParams> {
    let wsum: f64 = w.iter().sum();
    if wsum < 1e-12 {
        return Err(Error::Degenerate("all sample weights vanished".into()));
    }
    let mut pxm = 0.0;
    let mut pym = 0.0;
    let mut qxm = 0.0;
    let mut qym = 0.0;
    for (p, &wi) in pts.iter().zip(w) {
        pxm += wi * p.x;
        pym += wi * p.y;
        qxm += wi * p.tx;
        qym += wi * p.ty;
    }
    pxm /= wsum;
    pym /= wsum;
    qxm /= wsum;
    qym /= wsum;

    // Cross-covariance of centered points and source spread.
    let mut m11 = 0.0;
    let mut m12 = 0.0;
    let mut m21 = 0.0;
    let mut m22 = 0.0;
    let mut spread = 0.0;
    for (p, &wi) in pts.iter().zip(w) {
        let ax = p.x - pxm;
        let ay = p.y - pym;
        let bx = p.tx - qxm;
        let by = p.ty - qym;
        m11 += wi * bx * ax;
        m12 += wi * bx * ay;
        m21 += wi * by * ax;
        m22 += wi * by * ay;
        spread += wi * (ax * ax + ay * ay);
    }
    if spread < 1e-9 {
        return Err(Error::Degenerate(
            "sample geometry collapsed to a point under weighting".into(),
        ));
    }
    let r = (m21 - m12).atan2(m11 + m22);
    let (sin, cos) = r.sin_cos();
    let scale = (cos * (m11 + m22) + sin * (m21 - m12)) / spread;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate(format!("non-positive fitted scale {scale}")));
    }
    let s = scale.ln();

    // q_centroid = e^s R (p_centroid - c) + c + t.
    let es = scale;
    let rx = es * (cos * (pxm - cx) - sin * (pym - cy)) + cx;
    let ry = es * (sin * (pxm - cx) + cos * (pym - cy)) + cy;
    Ok(SimilarityParams {
        r,
        s,
        t_x: qxm - rx,
        t_y: qym - ry,
    })
}

/// Extracts flow correspondences on the standard 32x32 sub-grid.
fn flow_correspondences(flow: &FlowField) -> Vec<Correspondence> {
    let xs = subgrid_indices(flow.width, FIT_SUBGRID);
    let ys = subgrid_indices(flow.height, FIT_SUBGRID);
    let mut pts = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            if flow.is_valid(x, y) {
                let (u, v) = flow.at(x, y);
                pts.push(Correspondence {
                    x: x as f64,
                    y: y as f64,
                    tx: x as f64 + u,
                    ty: y as f64 + v,
                });
            }
        }
    }
    pts
}

/// Robust 4-parameter similarity fit to a global flow field. The flow is
/// sampled on a 32x32 sub-grid; a global flow is smooth by construction, so
/// denser sampling adds nothing.
pub fn fit_similarity(flow: &FlowField, loss: &RobustLossParams) -> Result<SimilarityParams> {
    let cx = (flow.width as f64 - 1.0) / 2.0;
    let cy = (flow.height as f64 - 1.0) / 2.0;
    fit_similarity_points(&flow_correspondences(flow), cx, cy, loss)
}

/// Correspondences of a coefficient block sampled on the standard sub-grid
/// at full-resolution pixel coordinates; identical to sampling
/// `evaluate(theta, h, w)` at those pixels, without rendering the field.
fn coeff_correspondences(theta: &crate::dct::DctCoeffs, h: usize, w: usize) -> Vec<Correspondence> {
    let xs = subgrid_indices(w, FIT_SUBGRID);
    let ys = subgrid_indices(h, FIT_SUBGRID);
    let grid = theta.grid();
    let f = theta.cutoff() + 1;
    let posy: Vec<f64> = ys
        .iter()
        .map(|&y| (y as f64 + 0.5) / h as f64 * grid.grid_h as f64 - 0.5)
        .collect();
    let posx: Vec<f64> = xs
        .iter()
        .map(|&x| (x as f64 + 0.5) / w as f64 * grid.grid_w as f64 - 0.5)
        .collect();
    let by = crate::dct::basis_matrix(grid.grid_h, f, &posy);
    let bx = crate::dct::basis_matrix(grid.grid_w, f, &posx);
    let mut pts = Vec::with_capacity(xs.len() * ys.len());
    for (yi, &y) in ys.iter().enumerate() {
        for (xi, &x) in xs.iter().enumerate() {
            let mut du = 0.0;
            let mut dv = 0.0;
            for u in 0..f {
                for v in 0..f {
                    let b = by[(u, yi)] * bx[(v, xi)];
                    du += theta.x(u, v) * b;
                    dv += theta.y(u, v) * b;
                }
            }
            pts.push(Correspondence {
                x: x as f64,
                y: y as f64,
                tx: x as f64 + du,
                ty: y as f64 + dv,
            });
        }
    }
    pts
}

/// Similarity fit straight from a coefficient block, equivalent to
/// `fit_similarity(evaluate(theta, h, w), loss)`.
pub fn fit_similarity_coeffs(
    theta: &crate::dct::DctCoeffs,
    h: usize,
    w: usize,
    loss: &RobustLossParams,
) -> Result<SimilarityParams> {
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    fit_similarity_points(&coeff_correspondences(theta, h, w), cx, cy, loss)
}

/// Full affine fit straight from a coefficient block.
pub fn fit_full_affine_coeffs(theta: &crate::dct::DctCoeffs, h: usize, w: usize) -> Result<[[f64; 3]; 2]> {
    fit_affine_points(&coeff_correspondences(theta, h, w))
}

/// Plain least-squares 6-parameter affine fit `p -> L p + b`, returned as
/// `[[l11, l12, b1], [l21, l22, b2]]` in pixel coordinates. Used by the
/// distortion measure.
pub fn fit_full_affine(flow: &FlowField) -> Result<[[f64; 3]; 2]> {
    fit_affine_points(&flow_correspondences(flow))
}

fn fit_affine_points(pts: &[Correspondence]) -> Result<[[f64; 3]; 2]> {
    if pts.len() < 3 {
        return Err(Error::Degenerate(format!(
            "affine fit needs at least 3 samples, got {}",
            pts.len()
        )));
    }
    // Shared 3x3 normal matrix for both output rows.
    let mut n = [[0.0f64; 3]; 3];
    let mut bx = [0.0f64; 3];
    let mut by = [0.0f64; 3];
    for p in &pts {
        let row = [p.x, p.y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                n[i][j] += row[i] * row[j];
            }
            bx[i] += row[i] * p.tx;
            by[i] += row[i] * p.ty;
        }
    }
    let sol_x = solve3(&n, &bx)?;
    let sol_y = solve3(&n, &by)?;
    Ok([sol_x, sol_y])
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Result<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    // Scale-aware rank test.
    let scale = a.iter().flatten().fold(0.0f64, |m, &v| m.max(v.abs()));
    if det.abs() < 1e-12 * scale.powi(3).max(1e-300) {
        return Err(Error::Degenerate("rank-deficient affine normal equations".into()));
    }
    let cofactor = |i: usize, j: usize| -> f64 {
        let (r0, r1) = match i {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (c0, c1) = match j {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let minor = a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor
    };
    let mut out = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            // (A^-1)[i][j] = cofactor(j, i) / det.
            out[i] += cofactor(j, i) / det * b[j];
        }
    }
    Ok(out)
}
