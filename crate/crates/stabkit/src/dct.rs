//! Low-frequency 2D-DCT representation of global motion.
//!
//! A flow field is modeled per channel as a linear combination of
//! orthonormal DCT-II cosines over a fixed fitting grid. Basis functions are
//! evaluated continuously, so a coefficient block can be rendered at any
//! pixel resolution; pixel centers are mapped into grid coordinates by
//! `(p + 0.5) / out_dim * grid_dim - 0.5`. At the grid's own resolution this
//! mapping hits the integer lattice, where the basis is exactly orthonormal
//! and projection/evaluation round-trip losslessly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::FlowField;

/// Fitting-grid geometry: the lattice the basis is orthonormal on, plus the
/// nominal pixel dimensions it spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub grid_h: usize,
    pub grid_w: usize,
    pub image_h: usize,
    pub image_w: usize,
}

impl GridSpec {
    pub fn new(grid_h: usize, grid_w: usize, image_h: usize, image_w: usize) -> Result<Self> {
        if grid_h < 2 || grid_w < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid must be at least 2x2, got {grid_w}x{grid_h}"
            )));
        }
        if grid_h > image_h || grid_w > image_w {
            return Err(Error::InvalidParameter(format!(
                "grid {grid_w}x{grid_h} exceeds image {image_w}x{image_h}"
            )));
        }
        Ok(GridSpec {
            grid_h,
            grid_w,
            image_h,
            image_w,
        })
    }

    /// The pipeline default: a 64x64 lattice regardless of image size.
    pub fn default_for(image_h: usize, image_w: usize) -> Result<Self> {
        GridSpec::new(64.min(image_h), 64.min(image_w), image_h, image_w)
    }
}

/// Low-frequency DCT coefficient block, one `(R+1) x (R+1)` matrix per flow
/// channel, indexed by vertical frequency `u` and horizontal frequency `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DctCoeffs {
    cutoff: usize,
    coeff_x: Vec<Vec<f64>>,
    coeff_y: Vec<Vec<f64>>,
    grid: GridSpec,
}

impl DctCoeffs {
    pub fn zeros(cutoff: usize, grid: GridSpec) -> Result<Self> {
        if cutoff + 1 > grid.grid_h.min(grid.grid_w) {
            return Err(Error::InvalidParameter(format!(
                "cutoff {} too large for grid {}x{}",
                cutoff, grid.grid_w, grid.grid_h
            )));
        }
        let n = cutoff + 1;
        Ok(DctCoeffs {
            cutoff,
            coeff_x: vec![vec![0.0; n]; n],
            coeff_y: vec![vec![0.0; n]; n],
            grid,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn x(&self, u: usize, v: usize) -> f64 {
        self.coeff_x[u][v]
    }

    #[inline]
    pub fn y(&self, u: usize, v: usize) -> f64 {
        self.coeff_y[u][v]
    }

    #[inline]
    pub fn set_x(&mut self, u: usize, v: usize, val: f64) {
        self.coeff_x[u][v] = val;
    }

    #[inline]
    pub fn set_y(&mut self, u: usize, v: usize, val: f64) {
        self.coeff_y[u][v] = val;
    }

    /// Mean displacement of the rendered field, i.e. the DC terms divided by
    /// the basis normalization `sqrt(grid_h * grid_w)`.
    pub fn mean_translation(&self) -> (f64, f64) {
        let norm = ((self.grid.grid_h * self.grid.grid_w) as f64).sqrt();
        (self.coeff_x[0][0] / norm, self.coeff_y[0][0] / norm)
    }

    /// Frobenius norm over both channels.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for u in 0..=self.cutoff {
            for v in 0..=self.cutoff {
                s += self.coeff_x[u][v].powi(2) + self.coeff_y[u][v].powi(2);
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for u in 0..=self.cutoff {
            for v in 0..=self.cutoff {
                m = m.max(self.coeff_x[u][v].abs()).max(self.coeff_y[u][v].abs());
            }
        }
        m
    }

    /// Componentwise linear combination `self + s * other`; cutoffs and grids
    /// must match.
    pub fn axpy(&mut self, s: f64, other: &DctCoeffs) {
        assert_eq!(self.cutoff, other.cutoff);
        for u in 0..=self.cutoff {
            for v in 0..=self.cutoff {
                self.coeff_x[u][v] += s * other.coeff_x[u][v];
                self.coeff_y[u][v] += s * other.coeff_y[u][v];
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for u in 0..=self.cutoff {
            for v in 0..=self.cutoff {
                self.coeff_x[u][v] *= s;
                self.coeff_y[u][v] *= s;
            }
        }
    }

    pub(crate) fn channel_matrix(&self, vertical: bool) -> DMatrix<f64> {
        let n = self.cutoff + 1;
        let src = if vertical { &self.coeff_y } else { &self.coeff_x };
        DMatrix::from_fn(n, n, |u, v| src[u][v])
    }
}

/// Orthonormal DCT-II basis value `phi_u(t)` on an `n`-point lattice,
/// evaluated at a continuous coordinate `t`.
#[inline]
pub(crate) fn basis_value(n: usize, u: usize, t: f64) -> f64 {
    let nf = n as f64;
    let w = if u == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
    w * (std::f64::consts::PI * u as f64 * (2.0 * t + 1.0) / (2.0 * nf)).cos()
}

/// Basis matrix `(n_freq x positions.len())` with rows `u = 0..n_freq`.
pub(crate) fn basis_matrix(n_grid: usize, n_freq: usize, positions: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n_freq, positions.len(), |u, i| basis_value(n_grid, u, positions[i]))
}

/// Grid coordinates of the pixel centers `0..out_dim` on an `n_grid` lattice.
pub(crate) fn pixel_grid_positions(n_grid: usize, out_dim: usize) -> Vec<f64> {
    (0..out_dim)
        .map(|p| (p as f64 + 0.5) / out_dim as f64 * n_grid as f64 - 0.5)
        .collect()
}

/// Renders the coefficient block as a dense flow field at `out_h x out_w`.
/// All pixels are valid.
pub fn evaluate(coeffs: &DctCoeffs, out_h: usize, out_w: usize) -> FlowField {
    assert!(out_h > 0 && out_w > 0, "evaluate needs positive dimensions");
    let grid = coeffs.grid();
    let by = basis_matrix(grid.grid_h, coeffs.cutoff + 1, &pixel_grid_positions(grid.grid_h, out_h));
    let bx = basis_matrix(grid.grid_w, coeffs.cutoff + 1, &pixel_grid_positions(grid.grid_w, out_w));
    let ufield = by.transpose() * coeffs.channel_matrix(false) * &bx;
    let vfield = by.transpose() * coeffs.channel_matrix(true) * &bx;
    let mut flow = FlowField::zeros(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let i = y * out_w + x;
            flow.u[i] = ufield[(y, x)];
            flow.v[i] = vfield[(y, x)];
        }
    }
    flow
}

/// Bilinear sample of a flow channelpair with invalid-corner renormalization.
/// Falls back to zero displacement when no valid support exists.
fn sample_renormalized(flow: &FlowField, x: f64, y: f64) -> (f64, f64) {
    let (w, h) = (flow.width, flow.height);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = (xc as usize).min(w.saturating_sub(2));
    let y0 = (yc as usize).min(h.saturating_sub(2));
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let mut u = 0.0;
    let mut v = 0.0;
    let mut wsum = 0.0;
    for (dy, dx, wgt) in [
        (0, 0, (1.0 - fy) * (1.0 - fx)),
        (0, 1, (1.0 - fy) * fx),
        (1, 0, fy * (1.0 - fx)),
        (1, 1, fy * fx),
    ] {
        let xi = (x0 + dx).min(w - 1);
        let yi = (y0 + dy).min(h - 1);
        let i = yi * w + xi;
        if flow.valid[i] {
            u += wgt * flow.u[i];
            v += wgt * flow.v[i];
            wsum += wgt;
        }
    }
    if wsum > 1e-12 {
        (u / wsum, v / wsum)
    } else {
        (0.0, 0.0)
    }
}

/// Least-squares projection of a dense flow onto the low-frequency basis:
/// the flow is bilinearly resampled to grid resolution, then each channel is
/// reduced to inner products with the orthonormal basis functions.
///
/// Rejects flows with more than 50% invalid pixels.
pub fn project(flow: &FlowField, cutoff: usize, grid: GridSpec) -> Result<DctCoeffs> {
    let bad = flow.invalid_fraction();
    if bad > 0.5 {
        return Err(Error::TooManyInvalid {
            invalid_pct: bad * 100.0,
        });
    }
    let mut out = DctCoeffs::zeros(cutoff, grid)?;
    let mut fu = DMatrix::<f64>::zeros(grid.grid_h, grid.grid_w);
    let mut fv = DMatrix::<f64>::zeros(grid.grid_h, grid.grid_w);
    for gy in 0..grid.grid_h {
        let py = (gy as f64 + 0.5) / grid.grid_h as f64 * flow.height as f64 - 0.5;
        for gx in 0..grid.grid_w {
            let px = (gx as f64 + 0.5) / grid.grid_w as f64 * flow.width as f64 - 0.5;
            let (u, v) = sample_renormalized(flow, px, py);
            fu[(gy, gx)] = u;
            fv[(gy, gx)] = v;
        }
    }
    let by = basis_matrix(grid.grid_h, cutoff + 1, &pixel_grid_positions(grid.grid_h, grid.grid_h));
    let bx = basis_matrix(grid.grid_w, cutoff + 1, &pixel_grid_positions(grid.grid_w, grid.grid_w));
    let cx = &by * fu * bx.transpose();
    let cy = &by * fv * bx.transpose();
    for u in 0..=cutoff {
        for v in 0..=cutoff {
            out.coeff_x[u][v] = cx[(u, v)];
            out.coeff_y[u][v] = cy[(u, v)];
        }
    }
    Ok(out)
}

/// Changes the cutoff: frequencies above the new cutoff are dropped, missing
/// ones are zero-padded.
pub fn truncate(coeffs: &DctCoeffs, new_cutoff: usize) -> Result<DctCoeffs> {
    let mut out = DctCoeffs::zeros(new_cutoff, coeffs.grid())?;
    let keep = new_cutoff.min(coeffs.cutoff);
    for u in 0..=keep {
        for v in 0..=keep {
            out.coeff_x[u][v] = coeffs.coeff_x[u][v];
            out.coeff_y[u][v] = coeffs.coeff_y[u][v];
        }
    }
    Ok(out)
}
