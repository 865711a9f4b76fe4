//! Separable tensor-product basis kernels.
//!
//! Every least-squares system in this crate has design rows of the form
//! `phi_u(y) * phi_v(x)` on a Cartesian sample lattice. Weighted Gram
//! matrices then factor through per-axis basis products:
//!
//! `G[(u,v),(u',v')] = sum_y (phi_u phi_u')(y) * sum_x s(y,x) (phi_v phi_v')(x)`
//!
//! which drops the cost of a Gram build from O(n m^2) to roughly
//! O(P n + P f^2 nx) with P = f(f+1)/2 row pairs. That difference is what
//! keeps per-frame alignment interactive on a CPU.

use nalgebra::{DMatrix, DVector};

pub(crate) struct SepBasis {
    /// Frequencies per axis.
    pub f: usize,
    pub ny: usize,
    pub nx: usize,
    /// `f x ny` vertical basis values.
    pub by: DMatrix<f64>,
    /// `f x nx` horizontal basis values.
    pub bx: DMatrix<f64>,
    /// Row `p` is the elementwise product of `by` rows `u` and `u'` for the
    /// p-th pair `(u <= u')`.
    by_pairs: DMatrix<f64>,
    pairs: Vec<(usize, usize)>,
}

impl SepBasis {
    pub fn new(by: DMatrix<f64>, bx: DMatrix<f64>) -> Self {
        let f = by.nrows();
        assert_eq!(f, bx.nrows());
        let ny = by.ncols();
        let nx = bx.ncols();
        let mut pairs = Vec::with_capacity(f * (f + 1) / 2);
        for u in 0..f {
            for up in u..f {
                pairs.push((u, up));
            }
        }
        let mut by_pairs = DMatrix::<f64>::zeros(pairs.len(), ny);
        for (p, &(u, up)) in pairs.iter().enumerate() {
            for y in 0..ny {
                by_pairs[(p, y)] = by[(u, y)] * by[(up, y)];
            }
        }
        SepBasis {
            f,
            ny,
            nx,
            by,
            bx,
            by_pairs,
            pairs,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.ny * self.nx
    }

    pub fn n_coeffs(&self) -> usize {
        self.f * self.f
    }

    /// Renders `By^T C Bx` at all lattice samples, row-major in `(y, x)`.
    pub fn render(&self, c: &DMatrix<f64>) -> Vec<f64> {
        let t = c * &self.bx; // f x nx
        let mut out = vec![0.0; self.ny * self.nx];
        for y in 0..self.ny {
            for u in 0..self.f {
                let byv = self.by[(u, y)];
                if byv == 0.0 {
                    continue;
                }
                let row = &mut out[y * self.nx..(y + 1) * self.nx];
                for x in 0..self.nx {
                    row[x] += byv * t[(u, x)];
                }
            }
        }
        out
    }

    /// `rhs[u*f+v] = sum_{y,x} s(y,x) phi_u(y) phi_v(x)`, i.e. `By S Bx^T`
    /// flattened row-major in `(u, v)`.
    pub fn weighted_rhs(&self, s: &[f64]) -> DVector<f64> {
        debug_assert_eq!(s.len(), self.ny * self.nx);
        // t[u][x] = sum_y by[u][y] s(y,x)
        let mut t = DMatrix::<f64>::zeros(self.f, self.nx);
        for y in 0..self.ny {
            let row = &s[y * self.nx..(y + 1) * self.nx];
            for u in 0..self.f {
                let byv = self.by[(u, y)];
                if byv == 0.0 {
                    continue;
                }
                for x in 0..self.nx {
                    t[(u, x)] += byv * row[x];
                }
            }
        }
        let mut rhs = DVector::<f64>::zeros(self.f * self.f);
        for u in 0..self.f {
            for v in 0..self.f {
                let mut acc = 0.0;
                for x in 0..self.nx {
                    acc += t[(u, x)] * self.bx[(v, x)];
                }
                rhs[u * self.f + v] = acc;
            }
        }
        rhs
    }

    /// Weighted Gram matrix `G[(uv),(u'v')] = sum s(y,x) phi_u phi_u' phi_v phi_v'`,
    /// symmetric `m x m` with `m = f^2`.
    pub fn weighted_gram(&self, s: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(s.len(), self.ny * self.nx);
        let f = self.f;
        let m = f * f;
        // T[p][x] = sum_y by_pairs[p][y] s(y,x)
        let mut t = DMatrix::<f64>::zeros(self.pairs.len(), self.nx);
        for y in 0..self.ny {
            let row = &s[y * self.nx..(y + 1) * self.nx];
            for p in 0..self.pairs.len() {
                let w = self.by_pairs[(p, y)];
                if w == 0.0 {
                    continue;
                }
                for x in 0..self.nx {
                    t[(p, x)] += w * row[x];
                }
            }
        }
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut scaled = DMatrix::<f64>::zeros(f, self.nx);
        for (p, &(u, up)) in self.pairs.iter().enumerate() {
            for v in 0..f {
                for x in 0..self.nx {
                    scaled[(v, x)] = self.bx[(v, x)] * t[(p, x)];
                }
            }
            // e = scaled * bx^T, symmetric in (v, v').
            for v in 0..f {
                for vp in 0..f {
                    let mut acc = 0.0;
                    for x in 0..self.nx {
                        acc += scaled[(v, x)] * self.bx[(vp, x)];
                    }
                    gram[(u * f + v, up * f + vp)] = acc;
                    if u != up {
                        gram[(up * f + vp, u * f + v)] = acc;
                    }
                }
            }
        }
        gram
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dct;

    fn small_basis() -> SepBasis {
        let by = dct::basis_matrix(8, 3, &dct::pixel_grid_positions(8, 8));
        let bx = dct::basis_matrix(8, 3, &dct::pixel_grid_positions(8, 8));
        SepBasis::new(by, bx)
    }

    #[test]
    fn gram_matches_dense_construction() {
        let sep = small_basis();
        let n = sep.n_samples();
        let m = sep.n_coeffs();
        let s: Vec<f64> = (0..n).map(|i| 0.1 + (i % 7) as f64 * 0.3).collect();
        // Dense oracle: explicit design matrix rows.
        let mut dense = DMatrix::<f64>::zeros(n, m);
        for y in 0..sep.ny {
            for x in 0..sep.nx {
                for u in 0..sep.f {
                    for v in 0..sep.f {
                        dense[(y * sep.nx + x, u * sep.f + v)] = sep.by[(u, y)] * sep.bx[(v, x)];
                    }
                }
            }
        }
        let w = DMatrix::from_diagonal(&DVector::from_iterator(n, s.iter().copied()));
        let oracle = dense.transpose() * w * &dense;
        let fast = sep.weighted_gram(&s);
        for i in 0..m {
            for j in 0..m {
                assert!((oracle[(i, j)] - fast[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rhs_and_render_match_dense() {
        let sep = small_basis();
        let n = sep.n_samples();
        let s: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut dense = DMatrix::<f64>::zeros(n, sep.n_coeffs());
        for y in 0..sep.ny {
            for x in 0..sep.nx {
                for u in 0..sep.f {
                    for v in 0..sep.f {
                        dense[(y * sep.nx + x, u * sep.f + v)] = sep.by[(u, y)] * sep.bx[(v, x)];
                    }
                }
            }
        }
        let rhs = sep.weighted_rhs(&s);
        let oracle = dense.transpose() * DVector::from_iterator(n, s.iter().copied());
        for i in 0..sep.n_coeffs() {
            assert!((rhs[i] - oracle[i]).abs() < 1e-10);
        }

        let c = DMatrix::from_fn(sep.f, sep.f, |u, v| (u + 2 * v) as f64 * 0.5 - 1.0);
        let rendered = sep.render(&c);
        let cvec = DVector::from_iterator(
            sep.n_coeffs(),
            (0..sep.f * sep.f).map(|i| c[(i / sep.f, i % sep.f)]),
        );
        let oracle2 = dense * cvec;
        for i in 0..n {
            assert!((rendered[i] - oracle2[i]).abs() < 1e-10);
        }
    }
}
