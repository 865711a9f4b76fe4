//! Stage 1: smoothing of the frame-to-frame similarity parameter sequence
//! by box-constrained quadratic programming, with the box size chosen by a
//! crop-ratio-driven binary search.
//!
//! The smoothed sequence `beta` minimizes the curvature energy
//! `sum ||beta_{i+1} - 2 beta_i + beta_{i-1}||^2` plus a tiny fidelity term
//! `fidelity_eps * ||beta - alpha||^2` (the curvature objective alone is
//! invariant to linear-in-time shifts, so the fidelity term pins a unique
//! minimizer), subject to `|beta_i(k) - alpha_i(k)| <= xi_k` per parameter.

use serde::{Deserialize, Serialize};

use crate::affine::{self, SimilarityParams};
use crate::error::{Error, Result};
use crate::warp;

/// Time-ordered frame-to-frame similarity parameters (length `T - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSequence {
    pub values: Vec<SimilarityParams>,
}

impl ParamSequence {
    pub fn new(values: Vec<SimilarityParams>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("parameter sequence is empty".into()));
        }
        if values.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter in sequence".into()));
        }
        Ok(ParamSequence { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One parameter channel, `k` in 0..4 ordered `(r, s, t_x, t_y)`.
    pub fn channel(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|p| p.get(k)).collect()
    }

    pub fn from_channels(channels: &[Vec<f64>; 4]) -> Self {
        let n = channels[0].len();
        let values = (0..n)
            .map(|i| SimilarityParams::new(channels[0][i], channels[1][i], channels[2][i], channels[3][i]))
            .collect();
        ParamSequence { values }
    }

    /// Total squared second-difference energy over all four channels.
    pub fn curvature_energy(&self) -> f64 {
        let mut e = 0.0;
        for k in 0..4 {
            let c = self.channel(k);
            for w in c.windows(3) {
                let d = w[2] - 2.0 * w[1] + w[0];
                e += d * d;
            }
        }
        e
    }
}

/// Per-parameter slack scales and the global multiplier tying them together.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlackConfig {
    pub lambda: [f64; 4],
    pub z: f64,
    pub xi: [f64; 4],
    /// Set when the sequence was shorter than the std window and a single
    /// global deviation was used instead.
    pub degraded: bool,
}

/// Solver settings for the box-constrained QP.
#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub fidelity_eps: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            fidelity_eps: 1e-6,
            tol: 1e-8,
            max_iters: 5000,
        }
    }
}

pub const SLACK_WINDOW: usize = 9;

/// Per-parameter base slack scale: the average over all full sliding
/// windows (default length 9) of the windowed sample standard deviation.
/// Sequences shorter than the window fall back to one global deviation and
/// are flagged.
pub fn compute_slack_scales(alpha: &ParamSequence, window: usize) -> ([f64; 4], bool) {
    let n = alpha.len();
    let mut lambda = [0.0; 4];
    let degraded = n < window || window < 2;
    for (k, l) in lambda.iter_mut().enumerate() {
        let c = alpha.channel(k);
        if degraded {
            *l = sample_std(&c);
        } else {
            let mut acc = 0.0;
            let mut cnt = 0;
            for w in c.windows(window) {
                acc += sample_std(w);
                cnt += 1;
            }
            *l = acc / cnt as f64;
        }
    }
    (lambda, degraded)
}

fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    var.sqrt()
}

/// Outcome of a QP solve.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub beta: ParamSequence,
    /// Worst projected-gradient KKT residual over the four channels.
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Solves the four independent scalar box QPs. Constraints hold exactly
/// (iterates are clamped); the KKT residual is reported per solve.
pub fn solve_qp(alpha: &ParamSequence, xi: &[f64; 4], settings: &QpSettings) -> Result<QpSolution> {
    if xi.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter("negative slack bound".into()));
    }
    let mut channels: [Vec<f64>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let mut worst_kkt = 0.0f64;
    let mut all_conv = true;
    for k in 0..4 {
        let a = alpha.channel(k);
        let (x, kkt, conv) = solve_scalar_box_qp(&a, xi[k], settings);
        worst_kkt = worst_kkt.max(kkt);
        all_conv &= conv;
        channels[k] = x;
    }
    Ok(QpSolution {
        beta: ParamSequence::from_channels(&channels),
        kkt_residual: worst_kkt,
        converged: all_conv,
    })
}

/// Objective value of one scalar channel.
pub(crate) fn scalar_objective(x: &[f64], a: &[f64], eps: f64) -> f64 {
    let mut obj = 0.0;
    for i in 0..x.len().saturating_sub(2) {
        let d = x[i + 2] - 2.0 * x[i + 1] + x[i];
        obj += d * d;
    }
    for i in 0..x.len() {
        obj += eps * (x[i] - a[i]).powi(2);
    }
    obj
}

/// Pentadiagonal SPD system `Q = D2^T D2 + eps I` stored by diagonals.
struct Banded {
    d0: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Banded {
    fn curvature(n: usize, eps: f64) -> Banded {
        let mut d0 = vec![eps; n];
        let mut d1 = vec![0.0; n.saturating_sub(1)];
        let mut d2 = vec![0.0; n.saturating_sub(2)];
        // Accumulate rows (1, -2, 1) of D2^T D2.
        for k in 0..n.saturating_sub(2) {
            let idx = [k, k + 1, k + 2];
            let val = [1.0, -2.0, 1.0];
            for i in 0..3 {
                for j in i..3 {
                    let (r, c) = (idx[i], idx[j]);
                    match c - r {
                        0 => d0[r] += val[i] * val[j],
                        1 => d1[r] += val[i] * val[j],
                        2 => d2[r] += val[i] * val[j],
                        _ => unreachable!(),
                    }
                }
            }
        }
        Banded { d0, d1, d2 }
    }

    fn n(&self) -> usize {
        self.d0.len()
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        match hi - lo {
            0 => self.d0[lo],
            1 => self.d1[lo],
            2 => self.d2[lo],
            _ => 0.0,
        }
    }

    /// `Q x` for a full vector.
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.d0[i] * x[i];
            if i >= 1 {
                acc += self.d1[i - 1] * x[i - 1];
            }
            if i >= 2 {
                acc += self.d2[i - 2] * x[i - 2];
            }
            if i + 1 < n {
                acc += self.d1[i] * x[i + 1];
            }
            if i + 2 < n {
                acc += self.d2[i] * x[i + 2];
            }
            y[i] = acc;
        }
        y
    }
}

/// Cholesky factorization and solve for a pentadiagonal SPD matrix given by
/// diagonals; bandwidth-2 throughout.
fn banded_cholesky_solve(d0: &[f64], d1: &[f64], d2: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = d0.len();
    let mut ld = vec![0.0; n];
    let mut l1 = vec![0.0; n.saturating_sub(1)];
    let mut l2 = vec![0.0; n.saturating_sub(2)];
    for i in 0..n {
        let mut d = d0[i];
        if i >= 1 {
            d -= l1[i - 1] * l1[i - 1];
        }
        if i >= 2 {
            d -= l2[i - 2] * l2[i - 2];
        }
        ld[i] = d.max(1e-300).sqrt();
        if i + 1 < n {
            let mut v = d1[i];
            if i >= 1 {
                v -= l2[i - 1] * l1[i - 1];
            }
            l1[i] = v / ld[i];
        }
        if i + 2 < n {
            l2[i] = d2[i] / ld[i];
        }
    }
    // Forward.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = rhs[i];
        if i >= 1 {
            v -= l1[i - 1] * y[i - 1];
        }
        if i >= 2 {
            v -= l2[i - 2] * y[i - 2];
        }
        y[i] = v / ld[i];
    }
    // Backward.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        if i + 1 < n {
            v -= l1[i] * x[i + 1];
        }
        if i + 2 < n {
            v -= l2[i] * x[i + 2];
        }
        x[i] = v / ld[i];
    }
    x
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Projected-Newton active-set iteration for
/// `min ||D2 x||^2 + eps ||x - a||^2  s.t.  |x - a|_inf <= xi`:
/// alternate an exact pentadiagonal solve on the free set with box
/// projection, growing the active set from violations and shrinking it from
/// wrong-signed multipliers. Returns `(x, kkt_residual, converged)`.
fn solve_scalar_box_qp(a: &[f64], xi: f64, settings: &QpSettings) -> (Vec<f64>, f64, bool) {
    let n = a.len();
    if n == 0 {
        return (Vec::new(), 0.0, true);
    }
    // Degenerate box or no curvature rows: the answer is alpha itself.
    if xi <= 0.0 || n < 3 {
        return (a.to_vec(), 0.0, true);
    }
    let eps = settings.fidelity_eps;
    let q = Banded::curvature(n, eps);
    let lower: Vec<f64> = a.iter().map(|v| v - xi).collect();
    let upper: Vec<f64> = a.iter().map(|v| v + xi).collect();

    // Gradient is 2(Qx - eps a); the factor 2 is dropped uniformly.
    let grad = |x: &[f64]| -> Vec<f64> {
        let mut g = q.mul(x);
        for i in 0..n {
            g[i] -= eps * a[i];
        }
        g
    };
    let kkt_residual = |x: &[f64], state: &[Bound]| -> f64 {
        let g = grad(x);
        let mut worst = 0.0f64;
        for i in 0..n {
            let r = match state[i] {
                Bound::Free => g[i].abs(),
                Bound::Lower => (-g[i]).max(0.0),
                Bound::Upper => g[i].max(0.0),
            };
            worst = worst.max(r);
        }
        worst
    };

    // Unconstrained start, clamped.
    let rhs: Vec<f64> = a.iter().map(|v| eps * v).collect();
    let x0 = banded_cholesky_solve(&q.d0, &q.d1, &q.d2, &rhs);
    let mut state = vec![Bound::Free; n];
    let mut x = vec![0.0; n];
    for i in 0..n {
        if x0[i] < lower[i] {
            x[i] = lower[i];
            state[i] = Bound::Lower;
        } else if x0[i] > upper[i] {
            x[i] = upper[i];
            state[i] = Bound::Upper;
        } else {
            x[i] = x0[i];
        }
    }

    for _ in 0..settings.max_iters {
        // Solve the equality-constrained subproblem on the free set.
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        if !free.is_empty() {
            let nf = free.len();
            let mut fd0 = vec![0.0; nf];
            let mut fd1 = vec![0.0; nf.saturating_sub(1)];
            let mut fd2 = vec![0.0; nf.saturating_sub(2)];
            let mut frhs = vec![0.0; nf];
            for (ci, &i) in free.iter().enumerate() {
                fd0[ci] = q.at(i, i);
                if ci + 1 < nf {
                    fd1[ci] = q.at(i, free[ci + 1]);
                }
                if ci + 2 < nf {
                    fd2[ci] = q.at(i, free[ci + 2]);
                }
                let mut r = eps * a[i];
                // Move fixed neighbors to the right-hand side.
                for j in i.saturating_sub(2)..(i + 3).min(n) {
                    if j != i && state[j] != Bound::Free {
                        r -= q.at(i, j) * x[j];
                    }
                }
                frhs[ci] = r;
            }
            let xf = banded_cholesky_solve(&fd0, &fd1, &fd2, &frhs);
            let mut new_violation = false;
            for (ci, &i) in free.iter().enumerate() {
                if xf[ci] < lower[i] - 1e-15 {
                    x[i] = lower[i];
                    state[i] = Bound::Lower;
                    new_violation = true;
                } else if xf[ci] > upper[i] + 1e-15 {
                    x[i] = upper[i];
                    state[i] = Bound::Upper;
                    new_violation = true;
                } else {
                    x[i] = xf[ci];
                }
            }
            if new_violation {
                continue;
            }
        }
        // Free set feasible: release constraints with wrong-sign multipliers.
        let g = grad(&x);
        let mut released = false;
        for i in 0..n {
            match state[i] {
                Bound::Lower if g[i] < -settings.tol => {
                    state[i] = Bound::Free;
                    released = true;
                }
                Bound::Upper if g[i] > settings.tol => {
                    state[i] = Bound::Free;
                    released = true;
                }
                _ => {}
            }
        }
        if !released {
            let kkt = kkt_residual(&x, &state);
            return (x, kkt, kkt <= settings.tol);
        }
    }
    let kkt = kkt_residual(&x, &state);
    (x, kkt, false)
}

/// One probe of the crop-limit search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CropProbe {
    pub z: f64,
    pub min_crop_ratio: f64,
    pub feasible: bool,
}

/// Result of Stage-1 smoothing under a crop limit.
#[derive(Debug, Clone)]
pub struct StageOneSmoothing {
    pub beta: ParamSequence,
    /// Residual corrections `gamma_i = beta_i - alpha_i`, length `T - 1`.
    pub gamma: ParamSequence,
    /// Per-frame sampling maps (length `T`): frame `i` is backward-warped by
    /// `warps[i]`; `warps[0]` is the identity and
    /// `warps[i+1] = gamma_i . warps[i]` by center-anchored composition.
    pub warps: Vec<SimilarityParams>,
    pub slack: SlackConfig,
    /// Minimum crop ratio over frames at the chosen `z`.
    pub min_crop_ratio: f64,
    pub probes: Vec<CropProbe>,
    pub qp_converged: bool,
}

const CROP_SEARCH_STEPS: usize = 20;

/// Picks the largest `z` in `[0, 1]` (20 halvings) whose smoothed path keeps
/// every frame's crop ratio at or above `kappa`, and returns the smoothing
/// computed at that `z`. `z = 0` (no smoothing) is always feasible.
pub fn smooth_with_crop_limit(
    alpha: &ParamSequence,
    kappa: f64,
    frame_h: usize,
    frame_w: usize,
    settings: &QpSettings,
) -> Result<StageOneSmoothing> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidParameter(format!("crop limit {kappa} outside (0, 1]")));
    }
    let (lambda, degraded) = compute_slack_scales(alpha, SLACK_WINDOW);
    let mut probes = Vec::new();

    let evaluate = |z: f64| -> Result<(QpSolution, ParamSequence, Vec<SimilarityParams>, f64)> {
        let xi = [lambda[0] * z, lambda[1] * z, lambda[2] * z, lambda[3] * z];
        let sol = solve_qp(alpha, &xi, settings)?;
        let gamma_vals: Vec<SimilarityParams> = sol
            .beta
            .values
            .iter()
            .zip(&alpha.values)
            .map(|(b, a)| SimilarityParams::new(b.r - a.r, b.s - a.s, b.t_x - a.t_x, b.t_y - a.t_y))
            .collect();
        let mut warps = Vec::with_capacity(gamma_vals.len() + 1);
        warps.push(SimilarityParams::IDENTITY);
        for g in &gamma_vals {
            let prev = *warps.last().unwrap();
            warps.push(affine::compose(&prev, g));
        }
        let min_cr = warps
            .iter()
            .map(|w| warp::crop_ratio(&affine::invert(w), frame_h, frame_w))
            .fold(1.0f64, f64::min);
        Ok((sol, ParamSequence { values: gamma_vals }, warps, min_cr))
    };

    // z = 0 is the guaranteed-feasible fallback: beta = alpha, identity warps.
    let zero_gamma = ParamSequence {
        values: vec![SimilarityParams::IDENTITY; alpha.len()],
    };
    let mut best = (
        0.0f64,
        QpSolution {
            beta: alpha.clone(),
            kkt_residual: 0.0,
            converged: true,
        },
        zero_gamma,
        vec![SimilarityParams::IDENTITY; alpha.len() + 1],
        1.0f64,
    );

    let (sol1, g1, w1, cr1) = evaluate(1.0)?;
    probes.push(CropProbe {
        z: 1.0,
        min_crop_ratio: cr1,
        feasible: cr1 >= kappa,
    });
    if cr1 >= kappa {
        best = (1.0, sol1, g1, w1, cr1);
    } else {
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..CROP_SEARCH_STEPS {
            let mid = 0.5 * (lo + hi);
            let (sol, g, w, cr) = evaluate(mid)?;
            let feasible = cr >= kappa;
            probes.push(CropProbe {
                z: mid,
                min_crop_ratio: cr,
                feasible,
            });
            if feasible {
                lo = mid;
                best = (mid, sol, g, w, cr);
            } else {
                hi = mid;
            }
        }
    }

    let (z, sol, gamma, warps, min_cr) = best;
    let xi = [lambda[0] * z, lambda[1] * z, lambda[2] * z, lambda[3] * z];
    Ok(StageOneSmoothing {
        beta: sol.beta,
        gamma,
        warps,
        slack: SlackConfig {
            lambda,
            z,
            xi,
            degraded,
        },
        min_crop_ratio: min_cr,
        probes,
        qp_converged: sol.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_from_channel(k: usize, vals: &[f64]) -> ParamSequence {
        let values = vals
            .iter()
            .map(|&v| {
                let mut p = SimilarityParams::IDENTITY;
                p.set(k, v);
                p
            })
            .collect();
        ParamSequence { values }
    }

    #[test]
    fn slack_scales_constant_sequence_is_zero() {
        let seq = seq_from_channel(2, &[3.0; 20]);
        let (lambda, degraded) = compute_slack_scales(&seq, 9);
        assert!(!degraded);
        assert_eq!(lambda, [0.0; 4]);
    }

    #[test]
    fn slack_scales_alternating_matches_direct_std() {
        // Direct oracle: sample std of any length-9 window of the +/-1
        // pattern. Five of one sign, four of the other; mean 1/9:
        // sum (x - mean)^2 = 80/9, var = (80/9)/8 = 10/9.
        let vals: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let oracle = (10.0f64 / 9.0).sqrt();
        let seq = seq_from_channel(0, &vals);
        let (lambda, degraded) = compute_slack_scales(&seq, 9);
        assert!(!degraded);
        assert!((lambda[0] - oracle).abs() < 1e-12, "{} vs {oracle}", lambda[0]);
        // Within rounding of the nominal sqrt(9/8) value.
        assert!((lambda[0] - 1.0607).abs() < 0.01);
    }

    #[test]
    fn slack_scales_are_homogeneous() {
        let vals: Vec<f64> = (0..25).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let doubled: Vec<f64> = vals.iter().map(|v| 2.0 * v).collect();
        let (l1, _) = compute_slack_scales(&seq_from_channel(3, &vals), 9);
        let (l2, _) = compute_slack_scales(&seq_from_channel(3, &doubled), 9);
        assert!((l2[3] - 2.0 * l1[3]).abs() < 1e-12);
    }

    #[test]
    fn slack_scales_short_sequence_is_flagged() {
        let seq = seq_from_channel(1, &[1.0, 2.0, 4.0]);
        let (lambda, degraded) = compute_slack_scales(&seq, 9);
        assert!(degraded);
        assert!(lambda[1] > 0.0);
    }

    #[test]
    fn qp_zero_slack_returns_alpha() {
        let alpha = seq_from_channel(2, &[0.0, 5.0, -3.0, 2.0, 8.0]);
        let sol = solve_qp(&alpha, &[0.0; 4], &QpSettings::default()).unwrap();
        assert_eq!(sol.beta, alpha);
        assert!(sol.converged);
    }

    #[test]
    fn qp_spike_with_loose_box_flattens_to_mean_line() {
        // alpha = [0, 1, 0], xi = 1: the curvature can reach zero, and the
        // fidelity term picks the least-squares constant 1/3.
        let alpha = seq_from_channel(2, &[0.0, 1.0, 0.0]);
        let mut xi = [0.0; 4];
        xi[2] = 1.0;
        let sol = solve_qp(&alpha, &xi, &QpSettings::default()).unwrap();
        let c = sol.beta.channel(2);
        for v in &c {
            assert!((v - 1.0 / 3.0).abs() < 1e-3, "{c:?}");
        }
    }

    #[test]
    fn qp_spike_with_tight_box_sits_on_boundary() {
        let alpha = seq_from_channel(2, &[0.0, 1.0, 0.0]);
        let mut xi = [0.0; 4];
        xi[2] = 0.5;
        let sol = solve_qp(&alpha, &xi, &QpSettings::default()).unwrap();
        let c = sol.beta.channel(2);
        for v in &c {
            assert!((v - 0.5).abs() < 1e-3, "{c:?}");
        }
    }

    #[test]
    fn qp_constant_sequence_is_fixed_point() {
        let alpha = seq_from_channel(0, &[0.02; 12]);
        let sol = solve_qp(&alpha, &[1.0; 4], &QpSettings::default()).unwrap();
        for (b, a) in sol.beta.values.iter().zip(&alpha.values) {
            assert!((b.r - a.r).abs() < 1e-9);
        }
    }

    #[test]
    fn qp_box_feasibility_and_smoothness_gain() {
        let vals: Vec<f64> = (0..40)
            .map(|i| (i as f64 * 0.7).sin() * 3.0 + if i % 3 == 0 { 1.5 } else { -0.5 })
            .collect();
        let alpha = seq_from_channel(3, &vals);
        let xi = [0.0, 0.0, 0.0, 0.8];
        let sol = solve_qp(&alpha, &xi, &QpSettings::default()).unwrap();
        for (b, a) in sol.beta.values.iter().zip(&alpha.values) {
            assert!((b.t_y - a.t_y).abs() <= 0.8 + 1e-12);
        }
        assert!(sol.beta.curvature_energy() <= alpha.curvature_energy());
        assert!(sol.converged, "kkt {}", sol.kkt_residual);
    }

    #[test]
    fn crop_limit_one_returns_unsmoothed_path() {
        // Jittery path: any nonzero correction costs crop, so only z = 0
        // keeps C_R = 1.
        let vals: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 }).collect();
        let alpha = seq_from_channel(2, &vals);
        let out = smooth_with_crop_limit(&alpha, 1.0, 120, 160, &QpSettings::default()).unwrap();
        assert_eq!(out.slack.z, 0.0);
        assert_eq!(out.beta, alpha);
        assert_eq!(out.min_crop_ratio, 1.0);
        for w in &out.warps {
            assert!(w.max_abs() == 0.0);
        }
    }

    #[test]
    fn crop_limit_smooth_path_needs_no_correction() {
        let alpha = seq_from_channel(2, &[1.5; 30]);
        let out = smooth_with_crop_limit(&alpha, 0.8, 120, 160, &QpSettings::default()).unwrap();
        assert!(out.min_crop_ratio == 1.0);
        for g in &out.gamma.values {
            assert!(g.max_abs() < 1e-9);
        }
    }

    #[test]
    fn crop_limit_binds_on_jittery_path() {
        let vals: Vec<f64> = (0..40)
            .map(|i| 12.0 * if i % 2 == 0 { 1.0 } else { -1.0 } + (i as f64 * 0.3).sin() * 4.0)
            .collect();
        let alpha = seq_from_channel(2, &vals);
        let kappa = 0.8;
        let out = smooth_with_crop_limit(&alpha, kappa, 240, 320, &QpSettings::default()).unwrap();
        assert!(out.min_crop_ratio >= kappa - 1e-9);
        assert!(out.min_crop_ratio <= 1.0);
        // The next-larger probed z must violate kappa.
        if out.slack.z < 1.0 {
            let next_larger = out
                .probes
                .iter()
                .filter(|p| p.z > out.slack.z)
                .min_by(|a, b| a.z.partial_cmp(&b.z).unwrap())
                .unwrap();
            assert!(!next_larger.feasible);
        }
        // Probed feasibility is monotone in z on this path.
        let mut sorted = out.probes.clone();
        sorted.sort_by(|a, b| a.z.partial_cmp(&b.z).unwrap());
        for w in sorted.windows(2) {
            assert!(w[0].min_crop_ratio >= w[1].min_crop_ratio - 1e-9);
        }
    }
}
